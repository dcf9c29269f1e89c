//! Copula-based conditional value-at-risk: the expected weighted quantile
//! loss given that the joint distribution function of the drivers exceeds a
//! threshold beta.
//!
//! The headline estimator integrates the portfolio quantile against the
//! Kendall tail weight,
//!
//!   CCVaR_beta = [ int_beta^1 q(t) phi'(t) h(t, beta) dt ] / [1 - K(beta)],
//!
//! by adaptive quadrature on (beta, 1 - eps), with the upper endpoint
//! clipped because heavy-tailed margins diverge at 1. Three companions cover
//! the corners: the independence reduction through the lower-dimensional
//! Kendall function, the comonotone limit (a weighted sum of univariate
//! CVaRs), and a rejection Monte-Carlo oracle that implements the defining
//! conditional expectation directly and anchors every deterministic result.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::CopulaSpec;
use crate::kendall::{kendall_survival, CcvarWeight};
use crate::portfolio::PortfolioSpec;
use crate::quad::{integrate_res, QuadConfig};
use crate::sampling::sample_copula;
use crate::util::{mean, variance, CompensatedSum};

/// How a RiskValue was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Quadrature,
    McOracle,
    ClosedForm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Quadrature => "quadrature",
            Method::McOracle => "mc_oracle",
            Method::ClosedForm => "closed_form",
        })
    }
}

/// A single conditional-risk number with its provenance.
#[derive(Debug, Clone)]
pub struct RiskValue {
    pub beta: f64,
    pub value: f64,
    pub method: Method,
    /// Monte-Carlo standard error (oracle only).
    pub stderr: Option<f64>,
    /// Quadrature error estimate (deterministic methods only).
    pub abs_error: Option<f64>,
    /// Analytic bound on the mass lost to the upper endpoint clip.
    pub clip_bound: Option<f64>,
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "risk level beta must lie in [0, 1), got {beta}"
        )))
    }
}

fn check_dims(spec_dim: usize, port: &PortfolioSpec) -> Result<()> {
    if spec_dim == port.dim() {
        Ok(())
    } else {
        Err(Error::dimension(format!(
            "copula dimension {spec_dim} does not match portfolio dimension {}",
            port.dim()
        )))
    }
}

/// Unconditional weighted mean: the beta = 0 case of every estimator.
fn unconditional_mean(port: &PortfolioSpec, cfg: &QuadConfig) -> Result<RiskValue> {
    let lo = cfg.singular_clip;
    let hi = 1.0 - cfg.singular_clip;
    let est = integrate_res(|t| port.combined_quantile(t), lo, hi, cfg)?;
    let clip =
        cfg.singular_clip * (port.combined_quantile(lo)?.abs() + port.combined_quantile(hi)?.abs());
    Ok(RiskValue {
        beta: 0.0,
        value: est.value,
        method: Method::Quadrature,
        stderr: None,
        abs_error: Some(est.abs_error),
        clip_bound: Some(clip),
    })
}

/// CCVaR by adaptive quadrature of the Kendall tail weight.
///
/// The denominator 1 - K(beta) comes from the closed-form Kendall series,
/// not from integrating the weight; the two agree to quadrature tolerance
/// and that identity is enforced in tests, so the headline number carries
/// only one quadrature error, not two.
pub fn ccvar_quadrature(
    spec: &CopulaSpec,
    port: &PortfolioSpec,
    beta: f64,
    cfg: &QuadConfig,
) -> Result<RiskValue> {
    check_dims(spec.dim(), port)?;
    check_beta(beta)?;
    if beta == 0.0 {
        return unconditional_mean(port, cfg);
    }
    let hi = 1.0 - cfg.singular_clip;
    if beta >= hi {
        return Err(Error::domain(format!(
            "beta = {beta} lies inside the clipped endpoint region"
        )));
    }
    let denom = kendall_survival(spec, beta)?;
    if denom < 1e-14 {
        return Err(Error::DegenerateDenominator(denom));
    }
    let weight = CcvarWeight::new(spec, beta)?;
    let est = integrate_res(
        |t| Ok(port.combined_quantile(t)? * weight.eval(t)?),
        beta,
        hi,
        cfg,
    )?;
    let clip = cfg.singular_clip * port.combined_quantile(hi)?.abs() / denom;
    Ok(RiskValue {
        beta,
        value: est.value / denom,
        method: Method::Quadrature,
        stderr: None,
        abs_error: Some(est.abs_error / denom),
        clip_bound: Some(clip),
    })
}

/// Independence Kendall function K_m(x) = x sum_{i<m} (-ln x)^i / i!.
fn independence_kendall(m: usize, x: f64) -> f64 {
    debug_assert!(m >= 1);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let l = -x.ln();
    let mut term = 1.0;
    let mut acc = CompensatedSum::new();
    acc.add(1.0);
    for i in 1..m {
        term *= l / i as f64;
        acc.add(term);
    }
    (x * acc.total()).min(1.0)
}

/// The multivariate CVaR of the independence copula: the reduction of the
/// general formula in which the tail weight becomes 1 - K_{d-1}(beta / t).
/// Implemented directly from that expression as a cross-check against
/// `ccvar_quadrature` with an independence spec.
pub fn mcvar_independence(
    port: &PortfolioSpec,
    d: usize,
    beta: f64,
    cfg: &QuadConfig,
) -> Result<RiskValue> {
    if d < 2 {
        return Err(Error::dimension(format!(
            "independence reduction needs d >= 2, got {d}"
        )));
    }
    check_dims(d, port)?;
    check_beta(beta)?;
    if beta == 0.0 {
        return unconditional_mean(port, cfg);
    }
    let hi = 1.0 - cfg.singular_clip;
    if beta >= hi {
        return Err(Error::domain(format!(
            "beta = {beta} lies inside the clipped endpoint region"
        )));
    }
    let denom = 1.0 - independence_kendall(d, beta);
    if denom < 1e-14 {
        return Err(Error::DegenerateDenominator(denom));
    }
    let est = integrate_res(
        |t| {
            let w = 1.0 - independence_kendall(d - 1, beta / t);
            Ok(port.combined_quantile(t)? * w)
        },
        beta,
        hi,
        cfg,
    )?;
    let clip = cfg.singular_clip * port.combined_quantile(hi)?.abs() / denom;
    Ok(RiskValue {
        beta,
        value: est.value / denom,
        method: Method::Quadrature,
        stderr: None,
        abs_error: Some(est.abs_error / denom),
        clip_bound: Some(clip),
    })
}

/// Comonotone limit: CCVaR collapses to the weighted sum of univariate
/// CVaRs, (1/(1-beta)) int_beta^1 q(t) dt, independent of the generator.
pub fn ccvar_comonotone(port: &PortfolioSpec, beta: f64) -> Result<RiskValue> {
    check_beta(beta)?;
    let cfg = QuadConfig::default();
    let hi = 1.0 - cfg.singular_clip;
    let lo = if beta == 0.0 { cfg.singular_clip } else { beta };
    let est = integrate_res(|t| port.combined_quantile(t), lo, hi, &cfg)?;
    let scale = 1.0 - beta;
    let clip = cfg.singular_clip * port.combined_quantile(hi)?.abs() / scale;
    Ok(RiskValue {
        beta,
        value: est.value / scale,
        method: Method::ClosedForm,
        stderr: None,
        abs_error: Some(est.abs_error / scale),
        clip_bound: Some(clip),
    })
}

/// Brute-force rejection oracle for the defining conditional expectation:
/// draw copula samples, keep those whose joint CDF value reaches beta, and
/// average the weighted quantile sums of the kept rows.
pub fn ccvar_mc_oracle(
    spec: &CopulaSpec,
    port: &PortfolioSpec,
    beta: f64,
    n: usize,
    seed: u64,
) -> Result<RiskValue> {
    check_dims(spec.dim(), port)?;
    check_beta(beta)?;
    if n < 10_000 {
        return Err(Error::parameter(format!(
            "oracle needs n >= 10000 samples, got {n}"
        )));
    }
    let panel = sample_copula(spec, n, seed)?;
    let kept: Vec<f64> = (0..panel.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = panel.row(i);
            if spec.cdf(row)? >= beta {
                Ok(Some(port.weighted_row(row)?))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<Option<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    if kept.len() < 100 {
        return Err(Error::InsufficientAcceptance {
            kept: kept.len(),
            total: n,
        });
    }
    let value = mean(&kept);
    let se = (variance(&kept) / kept.len() as f64).sqrt();
    Ok(RiskValue {
        beta,
        value,
        method: Method::McOracle,
        stderr: Some(se),
        abs_error: None,
        clip_bound: None,
    })
}
