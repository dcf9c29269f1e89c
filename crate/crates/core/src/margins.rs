//! AR(1)-GARCH(1,1) margins with Normal, Student-t, and skewed-t
//! innovations.
//!
//! Each asset's negative log-return series is modeled as
//!
//! ```text
//! X_t = a0 + a1 X_{t-1} + eps_t,          eps_t = z_t * sigma_t,
//! sigma_t^2 = c0 + c1 eps_{t-1}^2 + d1 sigma_{t-1}^2,
//! ```
//!
//! with `z_t` i.i.d. standardized (zero mean, unit variance) innovations.
//! The module provides quasi-maximum-likelihood fitting with
//! numerical-Hessian standard errors, simulation, probability-integral
//! transforms of the standardized residuals, and one-step-ahead quantile
//! forecasts.  The filter internally supports higher ARMA/GARCH orders,
//! but only the (1,1,1) specification used throughout the risk pipeline is
//! exposed.
//!
//! The skewed-t innovation follows the two-piece construction: a
//! standardized Student-t density is compressed on one side of the origin
//! and stretched on the other by the skewness parameter `zeta`, then
//! shifted and rescaled to keep zero mean and unit variance.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as StudentTSampler};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::optim::{minimize_bfgs, minimize_nelder_mead, numerical_gradient, numerical_hessian};
use crate::util::{autocorrelation, excess_kurtosis, mean, mix_seed, variance};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const SIM_TAG: u64 = 0x6761_7263;
/// Minimum series length accepted by the fitter.
pub const MIN_FIT_OBSERVATIONS: usize = 250;
/// PIT outputs are clamped inside the open unit interval at this margin.
const PIT_CLAMP: f64 = 1e-15;

// ---------------------------------------------------------------------------
// innovation distributions
// ---------------------------------------------------------------------------

/// Standardized innovation distribution of the GARCH recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Innovation {
    /// Standard normal.
    Normal,
    /// Student-t rescaled to unit variance; requires `nu > 2`.
    StudentT { nu: f64 },
    /// Two-piece skewed Student-t standardized to zero mean and unit
    /// variance; `zeta = 1` recovers `StudentT`.
    SkewedT { nu: f64, zeta: f64 },
}

/// Innovation family without shape parameters; the fitting entry point
/// takes this and estimates the shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InnovationFamily {
    Normal,
    StudentT,
    SkewedT,
}

impl InnovationFamily {
    pub const ALL: [InnovationFamily; 3] = [
        InnovationFamily::Normal,
        InnovationFamily::StudentT,
        InnovationFamily::SkewedT,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InnovationFamily::Normal => "normal",
            InnovationFamily::StudentT => "student-t",
            InnovationFamily::SkewedT => "skewed-t",
        }
    }

    /// Number of estimated shape parameters on top of the five
    /// mean/variance coefficients.
    fn shape_count(&self) -> usize {
        match self {
            InnovationFamily::Normal => 0,
            InnovationFamily::StudentT => 1,
            InnovationFamily::SkewedT => 2,
        }
    }
}

impl fmt::Display for InnovationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InnovationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "norm" | "gaussian" => Ok(InnovationFamily::Normal),
            "student-t" | "student_t" | "studentt" | "std-t" | "t" => {
                Ok(InnovationFamily::StudentT)
            }
            "skewed-t" | "skewed_t" | "skewedt" | "skew-t" | "skd-t" => {
                Ok(InnovationFamily::SkewedT)
            }
            other => Err(Error::parameter(format!(
                "unknown innovation family '{other}' (expected normal, student-t, or skewed-t)"
            ))),
        }
    }
}

impl Innovation {
    pub fn family(&self) -> InnovationFamily {
        match self {
            Innovation::Normal => InnovationFamily::Normal,
            Innovation::StudentT { .. } => InnovationFamily::StudentT,
            Innovation::SkewedT { .. } => InnovationFamily::SkewedT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Innovation::Normal => Ok(()),
            Innovation::StudentT { nu } => {
                if nu.is_finite() && nu > 2.0 {
                    Ok(())
                } else {
                    Err(Error::parameter(format!(
                        "student-t innovations need nu > 2 for a finite variance, got {nu}"
                    )))
                }
            }
            Innovation::SkewedT { nu, zeta } => {
                Innovation::StudentT { nu }.validate()?;
                if zeta.is_finite() && zeta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::parameter(format!(
                        "skewed-t innovations need zeta > 0, got {zeta}"
                    )))
                }
            }
        }
    }

    /// Log-density of the standardized innovation.
    pub fn log_density(&self, z: f64) -> f64 {
        Kernel::new(self).log_pdf(z)
    }

    /// CDF of the standardized innovation.
    pub fn cdf(&self, z: f64) -> f64 {
        Kernel::new(self).cdf(z)
    }

    /// Quantile of the standardized innovation, `p` in the open unit
    /// interval.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::parameter(format!(
                "quantile level must lie in (0,1), got {p}"
            )));
        }
        Ok(Kernel::new(self).quantile(p))
    }

    /// Draw one standardized innovation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Kernel::new(self).sample(rng)
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Innovation::Normal => write!(f, "normal"),
            Innovation::StudentT { nu } => write!(f, "student-t(nu={nu})"),
            Innovation::SkewedT { nu, zeta } => write!(f, "skewed-t(nu={nu}, zeta={zeta})"),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// CDF of the usual (variance nu/(nu-2)) Student-t distribution.
fn t_cdf(nu: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.5;
    }
    let x = nu / (nu + y * y);
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, x);
    if y > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn t_log_pdf(nu: f64, y: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (y * y / nu).ln_1p()
}

/// Quantile of the usual Student-t distribution by safeguarded Newton on
/// the exact CDF; the seed comes from a Cornish-Fisher expansion around
/// the Gaussian quantile, switched to the power-tail asymptote when the
/// target probability is far into the tail.
fn t_quantile(nu: f64, p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    if p == 0.5 {
        return 0.0;
    }
    if p > 0.5 {
        return -t_quantile(nu, 1.0 - p);
    }

    let u = std_normal().inverse_cdf(p);
    let u2 = u * u;
    let mut x =
        u * (1.0 + (u2 + 1.0) / (4.0 * nu) + (5.0 * u2 * u2 + 16.0 * u2 + 3.0) / (96.0 * nu * nu));
    if x * x > 2.0 * nu {
        // power tail: p ~ (nu/x^2)^{nu/2} / (nu B(nu/2, 1/2))
        let ln_b = ln_gamma(0.5 * nu) + ln_gamma(0.5) - ln_gamma(0.5 * (nu + 1.0));
        let ln_arg = p.ln() + nu.ln() + ln_b;
        let tail_seed = -nu.sqrt() * (-ln_arg / nu).exp();
        if tail_seed.is_finite() {
            x = tail_seed.min(-1.0);
        }
    }

    // bracket: F is increasing, F(0) = 1/2 > p
    let mut hi = 0.0;
    let mut lo = (2.0 * x).min(-1.0);
    for _ in 0..1100 {
        if !lo.is_finite() || t_cdf(nu, lo) <= p {
            break;
        }
        lo *= 2.0;
    }
    if !lo.is_finite() {
        lo = f64::MIN;
    }
    x = x.clamp(lo, hi);

    for _ in 0..100 {
        let f = t_cdf(nu, x) - p;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let pdf = t_log_pdf(nu, x).exp();
        let mut next = x - f / pdf;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Student-t rescaled to unit variance, with cached normalization.
#[derive(Debug, Clone, Copy)]
struct StdT {
    nu: f64,
    /// scale back to the usual t: Y = c * Z with c = sqrt(nu/(nu-2))
    c: f64,
    ln_norm: f64,
}

impl StdT {
    fn new(nu: f64) -> Self {
        let c = (nu / (nu - 2.0)).sqrt();
        let ln_norm = c.ln() + ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (nu * std::f64::consts::PI).ln();
        StdT { nu, c, ln_norm }
    }

    #[inline]
    fn log_pdf(&self, x: f64) -> f64 {
        let y = self.c * x;
        self.ln_norm - 0.5 * (self.nu + 1.0) * (y * y / self.nu).ln_1p()
    }

    fn cdf(&self, x: f64) -> f64 {
        t_cdf(self.nu, self.c * x)
    }

    fn quantile(&self, p: f64) -> f64 {
        t_quantile(self.nu, p) / self.c
    }

    /// Mean of |Z| for the unit-variance t; enters the skewed-t moments.
    fn abs_mean(&self) -> f64 {
        (std::f64::consts::LN_2 + 0.5 * (self.nu - 2.0).ln() + ln_gamma(0.5 * (self.nu + 1.0))
            - 0.5 * std::f64::consts::PI.ln()
            - (self.nu - 1.0).ln()
            - ln_gamma(0.5 * self.nu))
        .exp()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = StudentTSampler::new(self.nu).expect("nu > 2 validated");
        t.sample(rng) / self.c
    }
}

/// Two-piece skewed-t standardized to zero mean and unit variance.
#[derive(Debug, Clone, Copy)]
struct SkewedTDist {
    base: StdT,
    zeta: f64,
    /// mean of the unstandardized two-piece variable
    m: f64,
    /// its standard deviation
    s: f64,
    /// log of the two-piece normalization 2/(zeta + 1/zeta)
    ln_w: f64,
}

impl SkewedTDist {
    fn new(nu: f64, zeta: f64) -> Self {
        let base = StdT::new(nu);
        let m1 = base.abs_mean();
        let m = m1 * (zeta - 1.0 / zeta);
        let e2 = zeta * zeta - 1.0 + 1.0 / (zeta * zeta);
        let s = (e2 - m * m).sqrt();
        let ln_w = std::f64::consts::LN_2 - (zeta + 1.0 / zeta).ln();
        SkewedTDist {
            base,
            zeta,
            m,
            s,
            ln_w,
        }
    }

    #[inline]
    fn log_pdf(&self, z: f64) -> f64 {
        let y = self.m + self.s * z;
        let arg = if y >= 0.0 {
            y / self.zeta
        } else {
            y * self.zeta
        };
        self.s.ln() + self.ln_w + self.base.log_pdf(arg)
    }

    fn cdf(&self, z: f64) -> f64 {
        let y = self.m + self.s * z;
        let z2 = self.zeta * self.zeta;
        if y <= 0.0 {
            2.0 / (1.0 + z2) * self.base.cdf(y * self.zeta)
        } else {
            1.0 - 2.0 * z2 / (1.0 + z2) * (1.0 - self.base.cdf(y / self.zeta))
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let z2 = self.zeta * self.zeta;
        let p0 = 1.0 / (1.0 + z2);
        let y = if p <= p0 {
            self.base.quantile(0.5 * p * (1.0 + z2)) / self.zeta
        } else {
            self.zeta * self.base.quantile(1.0 - 0.5 * (1.0 - p) * (1.0 + z2) / z2)
        };
        (y - self.m) / self.s
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z2 = self.zeta * self.zeta;
        let x = self.base.sample(rng).abs();
        let u: f64 = rng.gen();
        let y = if u * (1.0 + z2) < z2 {
            self.zeta * x
        } else {
            -x / self.zeta
        };
        (y - self.m) / self.s
    }
}

/// Prebuilt density/CDF kernel for one innovation; avoids recomputing
/// gamma-function constants inside likelihood loops.
#[derive(Debug, Clone, Copy)]
enum Kernel {
    Normal,
    T(StdT),
    Skew(SkewedTDist),
}

impl Kernel {
    fn new(inn: &Innovation) -> Kernel {
        match *inn {
            Innovation::Normal => Kernel::Normal,
            Innovation::StudentT { nu } => Kernel::T(StdT::new(nu)),
            Innovation::SkewedT { nu, zeta } => Kernel::Skew(SkewedTDist::new(nu, zeta)),
        }
    }

    #[inline]
    fn log_pdf(&self, z: f64) -> f64 {
        match self {
            Kernel::Normal => -0.5 * (z * z + LN_2PI),
            Kernel::T(t) => t.log_pdf(z),
            Kernel::Skew(s) => s.log_pdf(z),
        }
    }

    fn cdf(&self, z: f64) -> f64 {
        match self {
            Kernel::Normal => std_normal().cdf(z),
            Kernel::T(t) => t.cdf(z),
            Kernel::Skew(s) => s.cdf(z),
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self {
            Kernel::Normal => std_normal().inverse_cdf(p),
            Kernel::T(t) => t.quantile(p),
            Kernel::Skew(s) => s.quantile(p),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Kernel::Normal => rng.sample(StandardNormal),
            Kernel::T(t) => t.sample(rng),
            Kernel::Skew(s) => s.sample(rng),
        }
    }
}

// ---------------------------------------------------------------------------
// series and model types
// ---------------------------------------------------------------------------

/// A univariate return series (negative log-returns scaled by 100 in the
/// pipeline; any finite series elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "return series contains a non-finite entry at index {bad}"
            )));
        }
        Ok(ReturnSeries { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Terminal filter state used for one-step-ahead forecasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastState {
    /// Final observation X_T.
    pub value: f64,
    /// Final mean-equation residual eps_T.
    pub residual: f64,
    /// Final conditional variance sigma_T^2.
    pub variance: f64,
}

/// Fitted (or hand-constructed) AR(1)-GARCH(1,1) margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginModel {
    a0: f64,
    a1: f64,
    c0: f64,
    c1: f64,
    d1: f64,
    innovation: Innovation,
    last_state: Option<LastState>,
}

/// Output of running the filter over a series: residuals, conditional
/// variances, standardized residuals (all aligned, starting at the second
/// observation), the conditional log-likelihood, and the terminal state.
#[derive(Debug, Clone)]
pub struct MarginFilter {
    pub residuals: Vec<f64>,
    pub variances: Vec<f64>,
    pub standardized: Vec<f64>,
    pub loglik: f64,
    pub last_state: LastState,
}

impl MarginModel {
    /// Validates the no-explosion and shape constraints.
    pub fn new(
        a0: f64,
        a1: f64,
        c0: f64,
        c1: f64,
        d1: f64,
        innovation: Innovation,
    ) -> Result<Self> {
        for (name, v) in [("a0", a0), ("a1", a1), ("c0", c0), ("c1", c1), ("d1", d1)] {
            if !v.is_finite() {
                return Err(Error::parameter(format!("{name} must be finite, got {v}")));
            }
        }
        if a1.abs() >= 1.0 {
            return Err(Error::parameter(format!(
                "AR coefficient must satisfy |a1| < 1, got {a1}"
            )));
        }
        if c0 <= 0.0 || c1 < 0.0 || d1 < 0.0 {
            return Err(Error::parameter(format!(
                "variance coefficients need c0 > 0, c1 >= 0, d1 >= 0, got ({c0}, {c1}, {d1})"
            )));
        }
        if c1 + d1 >= 1.0 {
            return Err(Error::Stationarity(c1 + d1));
        }
        innovation.validate()?;
        Ok(MarginModel {
            a0,
            a1,
            c0,
            c1,
            d1,
            innovation,
            last_state: None,
        })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn a1(&self) -> f64 {
        self.a1
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn innovation(&self) -> &Innovation {
        &self.innovation
    }
    pub fn last_state(&self) -> Option<LastState> {
        self.last_state
    }

    /// Attaches a terminal state (normally done by `filter`).
    pub fn with_state(mut self, state: LastState) -> Self {
        self.last_state = Some(state);
        self
    }

    /// Stationary variance c0 / (1 - c1 - d1).
    pub fn unconditional_variance(&self) -> f64 {
        self.c0 / (1.0 - self.c1 - self.d1)
    }

    /// Runs the residual/variance recursion over a series.  The first
    /// conditional variance is set to the sample variance of the series;
    /// the likelihood conditions on the first observation.
    pub fn filter(&self, series: &ReturnSeries) -> Result<MarginFilter> {
        let x = series.values();
        if x.len() < 2 {
            return Err(Error::domain(
                "the residual recursion needs at least two observations",
            ));
        }
        let v0 = variance(x);
        if !(v0 > 0.0) {
            return Err(Error::data(
                "constant series: the variance recursion cannot be initialized",
            ));
        }
        let kern = Kernel::new(&self.innovation);
        let n = x.len();
        let mut residuals = Vec::with_capacity(n - 1);
        let mut variances = Vec::with_capacity(n - 1);
        let mut standardized = Vec::with_capacity(n - 1);
        let mut loglik = 0.0;
        let mut sig2 = v0;
        for t in 1..n {
            if t > 1 {
                let e = residuals[t - 2];
                sig2 = self.c0 + self.c1 * e * e + self.d1 * sig2;
            }
            let eps = x[t] - self.a0 - self.a1 * x[t - 1];
            let z = eps / sig2.sqrt();
            loglik += kern.log_pdf(z) - 0.5 * sig2.ln();
            residuals.push(eps);
            variances.push(sig2);
            standardized.push(z);
        }
        Ok(MarginFilter {
            last_state: LastState {
                value: x[n - 1],
                residual: residuals[n - 2],
                variance: variances[n - 2],
            },
            residuals,
            variances,
            standardized,
            loglik,
        })
    }

    /// One-step-ahead conditional variance from the stored state.
    pub fn forecast_variance(&self) -> Result<f64> {
        let st = self.state()?;
        Ok(self.c0 + self.c1 * st.residual * st.residual + self.d1 * st.variance)
    }

    /// One-step-ahead quantile a0 + a1 X_T + sigma_{T+1} F_z^{-1}(p).
    pub fn quantile_forecast(&self, p: f64) -> Result<f64> {
        let st = self.state()?;
        let sig = self.forecast_variance()?.sqrt();
        Ok(self.a0 + self.a1 * st.value + sig * self.innovation.quantile(p)?)
    }

    fn state(&self) -> Result<LastState> {
        self.last_state.ok_or_else(|| {
            Error::domain("margin model carries no forecast state; filter a series first")
        })
    }
}

/// Probability-integral transform of the standardized residuals,
/// clamped strictly inside the unit interval.
pub fn pit_transform(model: &MarginModel, series: &ReturnSeries) -> Result<Vec<f64>> {
    let filt = model.filter(series)?;
    let kern = Kernel::new(model.innovation());
    Ok(filt
        .standardized
        .iter()
        .map(|&z| kern.cdf(z).clamp(PIT_CLAMP, 1.0 - PIT_CLAMP))
        .collect())
}

/// Simulates a series from the model, discarding a 1000-step burn-in.
/// Deterministic per seed.
pub fn simulate_garch(model: &MarginModel, n: usize, seed: u64) -> ReturnSeries {
    const BURN: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SIM_TAG));
    let kern = Kernel::new(model.innovation());
    let mut sig2 = model.unconditional_variance();
    let mut x_prev = model.a0 / (1.0 - model.a1);
    let mut eps_prev = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + BURN {
        if t > 0 {
            sig2 = model.c0 + model.c1 * eps_prev * eps_prev + model.d1 * sig2;
        }
        let eps = kern.sample(&mut rng) * sig2.sqrt();
        let x = model.a0 + model.a1 * x_prev + eps;
        if t >= BURN {
            out.push(x);
        }
        eps_prev = eps;
        x_prev = x;
    }
    ReturnSeries::new(out).expect("simulated recursion stays finite")
}

// ---------------------------------------------------------------------------
// fitting
// ---------------------------------------------------------------------------

/// Fit report: the model plus likelihood diagnostics and
/// numerical-Hessian standard errors aligned with [`MarginFit::param_names`].
#[derive(Debug, Clone)]
pub struct MarginFit {
    pub model: MarginModel,
    pub loglik: f64,
    /// Log-likelihood at the method-of-moments starting point.
    pub start_loglik: f64,
    pub aic: f64,
    pub stderr: Vec<f64>,
    /// Sup-norm of the numerical score at the optimum divided by
    /// max(1, |loglik|).
    pub scaled_gradient_norm: f64,
}

#[derive(Debug, Clone, Copy)]
struct Raw {
    a0: f64,
    a1: f64,
    c0: f64,
    c1: f64,
    d1: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Decodes the unconstrained optimizer vector into natural parameters;
/// `None` marks an infeasible point (mapped to +inf by the objective).
fn decode_free(family: InnovationFamily, free: &[f64]) -> Option<(Raw, Innovation)> {
    let a0 = free[0];
    if !a0.is_finite() {
        return None;
    }
    let a1 = free[1].tanh();
    let c0 = free[2].exp();
    if !(c0 > 0.0 && c0 < 1e12) {
        return None;
    }
    let s = sigmoid(free[3]);
    let r = sigmoid(free[4]);
    let c1 = s * r;
    let d1 = s - c1;
    let raw = Raw { a0, a1, c0, c1, d1 };
    let innovation = match family {
        InnovationFamily::Normal => Innovation::Normal,
        InnovationFamily::StudentT => {
            let nu = 2.0 + free[5].exp();
            if !(nu.is_finite() && nu < 1e7) {
                return None;
            }
            Innovation::StudentT { nu }
        }
        InnovationFamily::SkewedT => {
            let nu = 2.0 + free[5].exp();
            let zeta = free[6].exp();
            if !(nu.is_finite() && nu < 1e7) || !(1e-6..=1e6).contains(&zeta) {
                return None;
            }
            Innovation::SkewedT { nu, zeta }
        }
    };
    Some((raw, innovation))
}

/// Natural-parameter vector [a0, a1, c0, c1, d1, (nu), (zeta)] as a
/// function of the free vector; used for delta-method standard errors.
fn natural_of_free(family: InnovationFamily, free: &[f64]) -> Vec<f64> {
    match decode_free(family, free) {
        Some((raw, inn)) => {
            let mut v = vec![raw.a0, raw.a1, raw.c0, raw.c1, raw.d1];
            match inn {
                Innovation::Normal => {}
                Innovation::StudentT { nu } => v.push(nu),
                Innovation::SkewedT { nu, zeta } => {
                    v.push(nu);
                    v.push(zeta);
                }
            }
            v
        }
        None => vec![f64::NAN; 5 + family.shape_count()],
    }
}

fn encode_model(model: &MarginModel) -> Vec<f64> {
    let s = (model.c1 + model.d1).clamp(1e-8, 1.0 - 1e-8);
    let r = if model.c1 + model.d1 > 0.0 {
        (model.c1 / (model.c1 + model.d1)).clamp(1e-8, 1.0 - 1e-8)
    } else {
        0.5
    };
    let mut free = vec![
        model.a0,
        model.a1.clamp(-1.0 + 1e-9, 1.0 - 1e-9).atanh(),
        model.c0.max(1e-300).ln(),
        logit(s),
        logit(r),
    ];
    match *model.innovation() {
        Innovation::Normal => {}
        Innovation::StudentT { nu } => free.push((nu - 2.0).max(1e-8).ln()),
        Innovation::SkewedT { nu, zeta } => {
            free.push((nu - 2.0).max(1e-8).ln());
            free.push(zeta.ln());
        }
    }
    free
}

/// Method-of-moments starting point: Yule-Walker mean equation, standard
/// volatility-persistence defaults matching the stationary variance, and
/// a kurtosis-matched degrees-of-freedom seed.
fn moment_start(x: &[f64], family: InnovationFamily) -> Vec<f64> {
    let a1 = autocorrelation(x, 1).clamp(-0.9, 0.9);
    let a0 = mean(x) * (1.0 - a1);
    let resid: Vec<f64> = x.windows(2).map(|w| w[1] - a0 - a1 * w[0]).collect();
    let v = variance(&resid).max(1e-12);
    let s0 = 0.95;
    let r0 = 0.05 / 0.95;
    let mut free = vec![a0, a1.atanh(), (v * (1.0 - s0)).ln(), logit(s0), logit(r0)];
    if family.shape_count() > 0 {
        let k = excess_kurtosis(&resid);
        let nu0 = if k > 0.2 {
            (4.0 + 6.0 / k).clamp(4.5, 30.0)
        } else {
            30.0
        };
        free.push((nu0 - 2.0).ln());
        if family.shape_count() > 1 {
            free.push(0.0); // zeta = 1
        }
    }
    free
}

/// Conditional negative log-likelihood of the (1,1,1) recursion; the hot
/// path of the fitter, allocation-free.
fn negative_loglik(x: &[f64], v0: f64, p: &Raw, kern: &Kernel) -> f64 {
    let n = x.len();
    let mut ll = 0.0;
    let mut sig2 = v0;
    let mut eps_prev = 0.0;
    for t in 1..n {
        if t > 1 {
            sig2 = p.c0 + p.c1 * eps_prev * eps_prev + p.d1 * sig2;
        }
        if !(sig2 > 0.0 && sig2.is_finite()) {
            return f64::INFINITY;
        }
        let eps = x[t] - p.a0 - p.a1 * x[t - 1];
        ll += kern.log_pdf(eps / sig2.sqrt()) - 0.5 * sig2.ln();
        eps_prev = eps;
    }
    -ll
}

/// Quasi-maximum-likelihood fit of the AR(1)-GARCH(1,1) model.
pub fn fit_ar_garch(series: &ReturnSeries, family: InnovationFamily) -> Result<MarginFit> {
    fit_ar_garch_with_start(series, family, None)
}

/// As [`fit_ar_garch`], but optionally warm-started from a previously
/// fitted model (rolling-window refits); the warm start must use the same
/// innovation family.
pub fn fit_ar_garch_with_start(
    series: &ReturnSeries,
    family: InnovationFamily,
    warm: Option<&MarginModel>,
) -> Result<MarginFit> {
    let x = series.values();
    if x.len() < MIN_FIT_OBSERVATIONS {
        return Err(Error::data(format!(
            "need at least {MIN_FIT_OBSERVATIONS} observations to fit a margin, got {}",
            x.len()
        )));
    }
    let v0 = variance(x);
    if !(v0 > 0.0) {
        return Err(Error::data(
            "constant series: the variance recursion cannot be initialized",
        ));
    }

    let start_free = match warm {
        Some(m) => {
            if m.innovation().family() != family {
                return Err(Error::parameter(format!(
                    "warm start uses {} innovations but {} was requested",
                    m.innovation().family(),
                    family
                )));
            }
            encode_model(m)
        }
        None => moment_start(x, family),
    };

    let obj = |free: &[f64]| match decode_free(family, free) {
        Some((raw, inn)) => negative_loglik(x, v0, &raw, &Kernel::new(&inn)),
        None => f64::INFINITY,
    };
    let start_value = obj(&start_free);
    if !start_value.is_finite() {
        return Err(Error::NonConvergence(
            "likelihood is not finite at the starting point".into(),
        ));
    }

    let (bfgs_iters, nm_iters) = if warm.is_some() {
        (150, 400)
    } else {
        (400, 1200)
    };
    let bfgs = minimize_bfgs(|v| obj(v), &start_free, 1e-7, bfgs_iters);
    let nm = minimize_nelder_mead(|v| obj(v), &bfgs.x, 0.02, 1e-13, nm_iters);
    let mut best_x = if nm.value <= bfgs.value { nm.x } else { bfgs.x };
    let mut best_value = nm.value.min(bfgs.value);

    let loglik_of = |v: f64| -v;
    let mut grad = numerical_gradient(|v| obj(v), &best_x);
    let mut scaled = sup_abs(&grad) / loglik_of(best_value).abs().max(1.0);
    if scaled > 1e-4 {
        // one extra simplex round from a slightly larger simplex
        let retry = minimize_nelder_mead(|v| obj(v), &best_x, 0.1, 1e-13, 2 * nm_iters);
        if retry.value <= best_value {
            best_x = retry.x;
            best_value = retry.value;
        }
        grad = numerical_gradient(|v| obj(v), &best_x);
        scaled = sup_abs(&grad) / loglik_of(best_value).abs().max(1.0);
    }

    let (raw, innovation) =
        decode_free(family, &best_x).expect("optimum decodes: objective was finite there");
    if scaled > 1e-2 {
        return Err(Error::NonConvergence(format!(
            "scaled score norm {scaled:.3e} at the best iterate \
             (a0={}, a1={}, c0={}, c1={}, d1={}, loglik={})",
            raw.a0,
            raw.a1,
            raw.c0,
            raw.c1,
            raw.d1,
            loglik_of(best_value)
        )));
    }
    if raw.c1 + raw.d1 >= 1.0 - 1e-6 {
        return Err(Error::Stationarity(raw.c1 + raw.d1));
    }

    let mut model = MarginModel::new(raw.a0, raw.a1, raw.c0, raw.c1, raw.d1, innovation)?;
    let filt = model.filter(series)?;
    model.last_state = Some(filt.last_state);
    let loglik = filt.loglik;
    let k = best_x.len();

    // delta-method standard errors: invert the free-coordinate Hessian and
    // push through the Jacobian of the natural parameters
    let stderr = {
        let hess = numerical_hessian(|v| obj(v), &best_x);
        let cov_free = hess
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| hess.pseudo_inverse(1e-10).ok());
        match cov_free {
            Some(cov) => {
                let mut jac = DMatrix::zeros(k, k);
                let mut work = best_x.clone();
                for j in 0..k {
                    let h = 1e-5 * best_x[j].abs().max(1.0);
                    work[j] = best_x[j] + h;
                    let up = natural_of_free(family, &work);
                    work[j] = best_x[j] - h;
                    let dn = natural_of_free(family, &work);
                    work[j] = best_x[j];
                    for i in 0..k {
                        jac[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
                    }
                }
                let cov_nat = &jac * cov * jac.transpose();
                (0..k)
                    .map(|i| {
                        let v = cov_nat[(i, i)];
                        if v > 0.0 {
                            v.sqrt()
                        } else {
                            f64::NAN
                        }
                    })
                    .collect()
            }
            None => vec![f64::NAN; k],
        }
    };

    Ok(MarginFit {
        model,
        loglik,
        start_loglik: loglik_of(start_value),
        aic: 2.0 * k as f64 - 2.0 * loglik,
        stderr,
        scaled_gradient_norm: scaled,
    })
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &g| m.max(g.abs()))
}

impl MarginFit {
    /// Names of the estimated parameters, aligned with `stderr`.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self.model.innovation().family() {
            InnovationFamily::Normal => &["a0", "a1", "c0", "c1", "d1"],
            InnovationFamily::StudentT => &["a0", "a1", "c0", "c1", "d1", "nu"],
            InnovationFamily::SkewedT => &["a0", "a1", "c0", "c1", "d1", "nu", "zeta"],
        }
    }

    /// Estimated parameter values, aligned with [`param_names`](Self::param_names).
    pub fn params(&self) -> Vec<f64> {
        let m = &self.model;
        let mut v = vec![m.a0(), m.a1(), m.c0(), m.c1(), m.d1()];
        match *m.innovation() {
            Innovation::Normal => {}
            Innovation::StudentT { nu } => v.push(nu),
            Innovation::SkewedT { nu, zeta } => {
                v.push(nu);
                v.push(zeta);
            }
        }
        v
    }

    /// Flat key-value serialization (one `key value` pair per line).
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let m = &self.model;
        out.push_str(&format!("innovation {}\n", m.innovation().family()));
        for (name, value) in self.param_names().iter().zip(self.params()) {
            out.push_str(&format!("{name} {value:?}\n"));
        }
        for (name, se) in self.param_names().iter().zip(&self.stderr) {
            out.push_str(&format!("se_{name} {se:?}\n"));
        }
        out.push_str(&format!("loglik {:?}\n", self.loglik));
        out.push_str(&format!("start_loglik {:?}\n", self.start_loglik));
        out.push_str(&format!("aic {:?}\n", self.aic));
        out.push_str(&format!(
            "scaled_gradient_norm {:?}\n",
            self.scaled_gradient_norm
        ));
        if let Some(st) = m.last_state() {
            out.push_str(&format!("state_value {:?}\n", st.value));
            out.push_str(&format!("state_residual {:?}\n", st.residual));
            out.push_str(&format!("state_variance {:?}\n", st.variance));
        }
        out
    }

    /// Parses the format produced by [`to_key_value`](Self::to_key_value).
    pub fn from_key_value(text: &str) -> Result<MarginFit> {
        let mut map = std::collections::BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(char::is_whitespace).ok_or(Error::Parse {
                line: idx + 1,
                message: "expected 'key value'".into(),
            })?;
            map.insert(key.to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::data(format!("margin block is missing key '{key}'")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::data(format!("bad numeric value for '{key}': {e}")))
        };
        let family: InnovationFamily = get("innovation")?.parse()?;
        let innovation = match family {
            InnovationFamily::Normal => Innovation::Normal,
            InnovationFamily::StudentT => Innovation::StudentT { nu: num("nu")? },
            InnovationFamily::SkewedT => Innovation::SkewedT {
                nu: num("nu")?,
                zeta: num("zeta")?,
            },
        };
        let mut model = MarginModel::new(
            num("a0")?,
            num("a1")?,
            num("c0")?,
            num("c1")?,
            num("d1")?,
            innovation,
        )?;
        if map.contains_key("state_value") {
            model = model.with_state(LastState {
                value: num("state_value")?,
                residual: num("state_residual")?,
                variance: num("state_variance")?,
            });
        }
        let fit = MarginFit {
            loglik: num("loglik")?,
            start_loglik: num("start_loglik")?,
            aic: num("aic")?,
            scaled_gradient_norm: num("scaled_gradient_norm")?,
            stderr: Vec::new(),
            model,
        };
        let stderr = fit
            .param_names()
            .iter()
            .map(|name| num(&format!("se_{name}")))
            .collect::<Result<Vec<f64>>>()?;
        Ok(MarginFit { stderr, ..fit })
    }
}
