//! The Kendall distribution of an Archimedean copula: the law of the random
//! variable W = C(U) when U is drawn from C itself.
//!
//! For a d-dimensional Archimedean copula the distribution function has the
//! closed form
//!
//!   K(t) = t + sum_{i=1}^{d-1} (-1)^i phi(t)^i / i! * f_{i-1}(t),
//!
//! where f_i(t) is the (i+1)-th inverse-generator derivative evaluated at
//! phi(t). Complete monotonicity makes every summand positive, so the sum is
//! assembled from per-term logarithms with no internal cancellation — the
//! same series stays accurate at parameter values where the individual
//! factors would overflow.
//!
//! The same derivatives yield the tail-weight function w used by the
//! conditional-risk quadrature: w(t) = -phi'(t) * |h(t, beta)| is a
//! defective density on (beta, 1) whose total mass is exactly 1 - K(beta).

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::generators::CopulaSpec;
use crate::util::CompensatedSum;

/// K(t) = P(C(U) <= t) for U distributed according to the copula.
pub fn kendall_cdf(spec: &CopulaSpec, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!(
            "kendall_cdf requires t in [0, 1], got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == 1.0 {
        return Ok(1.0);
    }
    Ok((t + correction_sum(spec, t)?.total()).min(1.0))
}

/// 1 - K(beta), computed from the same positive series as `kendall_cdf` but
/// subtracted from (1 - beta) so the tail mass keeps full relative accuracy.
pub fn kendall_survival(spec: &CopulaSpec, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!(
            "kendall_survival requires beta in [0, 1], got {beta}"
        )));
    }
    if beta == 0.0 {
        return Ok(1.0);
    }
    if beta == 1.0 {
        return Ok(0.0);
    }
    let mut acc = correction_sum(spec, beta)?;
    acc.add(beta - 1.0);
    Ok((-acc.total()).max(0.0))
}

/// Positive correction series sum_{i=1}^{d-1} phi^i |f_{i-1}| / i!.
fn correction_sum(spec: &CopulaSpec, t: f64) -> Result<CompensatedSum> {
    let s = spec.phi(t)?;
    if !s.is_finite() {
        return Err(Error::Overflow("generator value in Kendall distribution"));
    }
    let ln_phi = spec.log_phi(t)?;
    let mut acc = CompensatedSum::new();
    for i in 1..spec.dim() {
        let ln_term =
            i as f64 * ln_phi + spec.log_inv_gen_derivative(i, s)? - ln_gamma(i as f64 + 1.0);
        acc.add(ln_term.exp());
    }
    Ok(acc)
}

/// Kendall density k(t) = K'(t) on the open unit interval.
pub fn kendall_pdf(spec: &CopulaSpec, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!(
            "kendall_pdf requires t in (0, 1), got {t}"
        )));
    }
    let d = spec.dim();
    let s = spec.phi(t)?;
    if !s.is_finite() {
        return Err(Error::Overflow("generator value in Kendall density"));
    }
    let ln_k = (d as f64 - 1.0) * spec.log_phi(t)? - ln_gamma(d as f64)
        + spec.log_abs_phi_prime(t)?
        + spec.log_inv_gen_derivative(d, s)?;
    Ok(ln_k.exp())
}

/// Truncated expansion h(t, beta) = f_0(t) - sum_{i=0}^{d-2} f_i(beta)
/// (phi(t) - phi(beta))^i / i!, the signed kernel of the conditional-tail
/// integrand. Direct evaluation, intended for moderate parameters and for
/// cross-checking the log-composed weight below.
pub fn h_factor(spec: &CopulaSpec, t: f64, beta: f64) -> Result<f64> {
    check_tail_point(t, beta)?;
    let dphi = spec.phi(t)? - spec.phi(beta)?;
    let mut taylor = CompensatedSum::new();
    let mut power = 1.0;
    let mut factorial = 1.0;
    for i in 0..=spec.dim() - 2 {
        if i > 0 {
            power *= dphi;
            factorial *= i as f64;
        }
        taylor.add(spec.f_aux(i, beta)? * power / factorial);
    }
    Ok(spec.f_aux(0, t)? - taylor.total())
}

/// The tail-weight function w(t, beta) = phi'(t) h(t, beta), precomputed at a
/// fixed threshold so repeated quadrature evaluations only pay for the
/// t-dependent factors.
///
/// Because phi' f_0 = 1 identically and every Taylor term of h carries the
/// same sign, w is assembled as 1 minus a sum of positive, individually
/// bounded terms: w(t) = 1 - sum_i exp(ln|phi'(t)| + ln|f_i(beta)| +
/// i ln(phi(beta) - phi(t)) - ln i!). Each term is at most 1, so the
/// composition cannot overflow even when |f_i(beta)| alone would.
pub struct CcvarWeight {
    spec: CopulaSpec,
    beta: f64,
    phi_beta: f64,
    ln_f_beta: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl CcvarWeight {
    pub fn new(spec: &CopulaSpec, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!(
                "tail weight requires beta in (0, 1), got {beta}"
            )));
        }
        let phi_beta = spec.phi(beta)?;
        if !phi_beta.is_finite() {
            return Err(Error::Overflow("generator value at the tail threshold"));
        }
        let mut ln_f_beta = Vec::with_capacity(spec.dim() - 1);
        let mut ln_fact = Vec::with_capacity(spec.dim() - 1);
        for i in 0..=spec.dim() - 2 {
            ln_f_beta.push(spec.log_abs_f_aux(i, beta)?);
            ln_fact.push(ln_gamma(i as f64 + 1.0));
        }
        Ok(CcvarWeight {
            spec: *spec,
            beta,
            phi_beta,
            ln_f_beta,
            ln_fact,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// w(t) in [0, 1]; zero at and below the threshold.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t <= 1.0) {
            return Err(Error::domain(format!(
                "tail weight requires t <= 1, got {t}"
            )));
        }
        if t <= self.beta {
            return Ok(0.0);
        }
        let ln_slope = self.spec.log_abs_phi_prime(t)?;
        // rounding in phi can leave a tiny negative difference just above beta
        let delta = (self.phi_beta - self.spec.phi(t)?).max(0.0);
        let ln_delta = delta.ln();
        let mut acc = CompensatedSum::new();
        for (i, (&ln_f, &ln_fact)) in self.ln_f_beta.iter().zip(&self.ln_fact).enumerate() {
            let ln_term = if i == 0 {
                ln_slope + ln_f
            } else {
                ln_slope + ln_f + i as f64 * ln_delta - ln_fact
            };
            acc.add(ln_term.exp());
        }
        Ok((1.0 - acc.total()).clamp(0.0, 1.0))
    }
}

fn check_tail_point(t: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!(
            "tail threshold beta must lie in (0, 1), got {beta}"
        )));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!(
            "tail point t must lie in (0, 1), got {t}"
        )));
    }
    Ok(())
}
