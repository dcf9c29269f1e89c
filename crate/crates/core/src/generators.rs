//! Archimedean generator families: the generator, its inverse, both of their
//! derivatives up to arbitrary order, and the family-level dependence
//! summaries (rank correlation, tail coefficients, CDF, density).
//!
//! Every admissible copula here takes the form C(u) = psi(phi(u_1) + ... +
//! phi(u_d)) with phi the generator and psi its inverse. The higher inverse
//! derivatives follow closed forms per family; where those forms involve
//! enormous intermediate factors they are evaluated in the log domain and
//! recombined with explicitly tracked signs, so overflow is detected at the
//! final exponential rather than silently saturating inside a polynomial.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::special;
use crate::util::CompensatedSum;

const MAX_EXP_ARG: f64 = 709.0;

/// Supported one-parameter Archimedean families (plus independence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Independence,
    Clayton,
    Frank,
    Gumbel,
    Joe,
    Amh,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Independence,
        Family::Clayton,
        Family::Frank,
        Family::Gumbel,
        Family::Joe,
        Family::Amh,
    ];

    /// Families that carry a dependence parameter.
    pub const PARAMETRIC: [Family; 5] = [
        Family::Clayton,
        Family::Frank,
        Family::Gumbel,
        Family::Joe,
        Family::Amh,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Clayton => "clayton",
            Family::Frank => "frank",
            Family::Gumbel => "gumbel",
            Family::Joe => "joe",
            Family::Amh => "amh",
        }
    }

    /// Admissible open/closed parameter interval as (lo, hi, lo_inclusive).
    /// The upper end is exclusive-infinite for every family except AMH.
    fn theta_interval(&self) -> (f64, f64, bool) {
        match self {
            Family::Independence => (0.0, 0.0, true),
            Family::Clayton | Family::Frank => (0.0, f64::INFINITY, false),
            Family::Gumbel | Family::Joe => (1.0, f64::INFINITY, true),
            Family::Amh => (0.0, 1.0, true),
        }
    }

    fn validate_theta(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(Error::parameter(format!(
                "{} parameter must be finite, got {theta}",
                self.name()
            )));
        }
        let ok = match self {
            Family::Independence => theta == 0.0,
            Family::Clayton | Family::Frank => theta > 0.0,
            Family::Gumbel | Family::Joe => theta >= 1.0,
            Family::Amh => (0.0..1.0).contains(&theta),
        };
        if ok {
            Ok(())
        } else {
            let (lo, hi, lo_inc) = self.theta_interval();
            Err(Error::parameter(format!(
                "{} parameter {theta} outside admissible range {}{lo}, {hi})",
                self.name(),
                if lo_inc { "[" } else { "(" },
            )))
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "independence" | "independent" | "product" => Ok(Family::Independence),
            "clayton" => Ok(Family::Clayton),
            "frank" => Ok(Family::Frank),
            "gumbel" => Ok(Family::Gumbel),
            "joe" => Ok(Family::Joe),
            "amh" => Ok(Family::Amh),
            other => Err(Error::parameter(format!("unknown copula family '{other}'"))),
        }
    }
}

/// Lower and upper tail-dependence coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailDependence {
    pub lower: f64,
    pub upper: f64,
}

/// A validated (family, parameter, dimension) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaSpec {
    family: Family,
    theta: f64,
    dim: usize,
}

impl CopulaSpec {
    pub fn new(family: Family, theta: f64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::dimension(format!(
                "copula dimension must be at least 2, got {dim}"
            )));
        }
        family.validate_theta(theta)?;
        Ok(CopulaSpec { family, theta, dim })
    }

    pub fn independence(dim: usize) -> Result<Self> {
        CopulaSpec::new(Family::Independence, 0.0, dim)
    }

    /// Same family and dimension with a different parameter.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        CopulaSpec::new(self.family, theta, self.dim)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// AMH at theta = 0 degenerates to independence; several closed forms
    /// need that routed explicitly.
    fn effective_family(&self) -> Family {
        if self.family == Family::Amh && self.theta == 0.0 {
            Family::Independence
        } else {
            self.family
        }
    }

    /// Generator phi(t) on (0, 1]; phi(1) = 0, increasing towards 0+.
    pub fn phi(&self, t: f64) -> Result<f64> {
        check_open_closed_unit(t, "phi")?;
        let th = self.theta;
        Ok(match self.family {
            Family::Independence => -t.ln(),
            Family::Clayton => (-th * t.ln()).exp_m1(),
            Family::Frank => {
                // -ln[(e^{-th t} - 1)/(e^{-th} - 1)]; the ratio form is exact
                // away from 1, the ln1p difference form exact near 1
                let num = -(-th * t).exp_m1(); // 1 - e^{-th t}
                let den = -(-th).exp_m1(); // 1 - e^{-th}
                if num < 0.5 * den {
                    (den / num).ln()
                } else {
                    let diff = -(-th * t).exp() * (-th * (1.0 - t)).exp_m1();
                    -(diff / (-th).exp_m1()).ln_1p()
                }
            }
            Family::Gumbel => (-t.ln()).powf(th),
            Family::Joe => {
                // -ln(1 - (1-t)^theta), exp_m1 when the power is near one
                let x = th * (-t).ln_1p(); // ln (1-t)^theta, <= 0
                if x > -std::f64::consts::LN_2 {
                    -(-x.exp_m1()).ln()
                } else {
                    -(-x.exp()).ln_1p()
                }
            }
            Family::Amh => ((1.0 - t) * (1.0 - th) / t).ln_1p(),
        })
    }

    /// Generator derivative phi'(t) < 0 on (0, 1].
    pub fn phi_prime(&self, t: f64) -> Result<f64> {
        check_open_closed_unit(t, "phi_prime")?;
        let th = self.theta;
        Ok(match self.family {
            Family::Independence => -1.0 / t,
            Family::Clayton => -th * (-(th + 1.0) * t.ln()).exp(),
            Family::Frank => -th / (th * t).exp_m1(),
            Family::Gumbel => {
                if th == 1.0 {
                    -1.0 / t
                } else {
                    -th * (-t.ln()).powf(th - 1.0) / t
                }
            }
            Family::Joe => {
                let one_m_t = 1.0 - t;
                let g = -(th * (-t).ln_1p()).exp_m1(); // 1 - (1-t)^theta
                -th * one_m_t.powf(th - 1.0) / g
            }
            Family::Amh => (th - 1.0) / (t * (1.0 - th + th * t)),
        })
    }

    /// ln phi(t) without forming phi itself, so extreme parameters cannot
    /// overflow the intermediate value.
    pub(crate) fn log_phi(&self, t: f64) -> Result<f64> {
        check_open_unit(t, "log_phi")?;
        let th = self.theta;
        Ok(match self.family {
            Family::Independence => (-t.ln()).ln(),
            Family::Clayton => ln_expm1(-th * t.ln()),
            Family::Frank => self.phi(t)?.ln(),
            Family::Gumbel => th * (-t.ln()).ln(),
            Family::Joe => {
                let x = th * (-t).ln_1p(); // ln (1-t)^theta, <= 0
                if x < -30.0 {
                    // phi = -ln(1 - e^x) ~ e^x (1 + e^x/2 + ...)
                    x + x.exp() / 2.0
                } else {
                    self.phi(t)?.ln()
                }
            }
            Family::Amh => self.phi(t)?.ln(),
        })
    }

    /// ln(-phi'(t)), the log of the generator slope magnitude.
    pub(crate) fn log_abs_phi_prime(&self, t: f64) -> Result<f64> {
        check_open_closed_unit(t, "phi_prime")?;
        let th = self.theta;
        Ok(match self.family {
            Family::Independence => -t.ln(),
            Family::Clayton => th.ln() - (th + 1.0) * t.ln(),
            Family::Frank => th.ln() - ln_expm1(th * t),
            Family::Gumbel => {
                if th == 1.0 {
                    -t.ln()
                } else {
                    th.ln() + (th - 1.0) * (-t.ln()).ln() - t.ln()
                }
            }
            Family::Joe => {
                let ln1mt = (-t).ln_1p();
                th.ln() + (th - 1.0) * ln1mt - (-(th * ln1mt).exp_m1()).ln()
            }
            Family::Amh => (1.0 - th).ln() - t.ln() - (1.0 - th + th * t).ln(),
        })
    }

    /// Inverse generator psi(s) = phi^{-1}(s) on [0, inf); psi(0) = 1.
    pub fn phi_inv(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::domain(format!("phi_inv requires s >= 0, got {s}")));
        }
        let th = self.theta;
        Ok(match self.family {
            Family::Independence => (-s).exp(),
            Family::Clayton => (-s.ln_1p() / th).exp(),
            Family::Frank => -frank_log_arg(th, s) / th,
            Family::Gumbel => (-s.powf(1.0 / th)).exp(),
            Family::Joe => {
                // 1 - (1 - e^{-s})^{1/theta} without cancellation at either end
                let ln_g = if s < std::f64::consts::LN_2 {
                    (-(-s).exp_m1()).ln()
                } else {
                    (-(-s).exp()).ln_1p()
                };
                -(ln_g / th).exp_m1()
            }
            Family::Amh => (1.0 - th) / (s.exp_m1() + (1.0 - th)),
        })
    }

    /// ln[(-1)^k psi^{(k)}(s)]: log magnitude of the k-th inverse-generator
    /// derivative, whose sign alternates with k by complete monotonicity.
    pub(crate) fn log_inv_gen_derivative(&self, k: usize, s: f64) -> Result<f64> {
        if k == 0 {
            return Err(Error::parameter(
                "inverse-generator derivative order must be >= 1",
            ));
        }
        if !(s > 0.0) {
            return Err(Error::domain(format!(
                "inverse-generator derivatives require s > 0, got {s}"
            )));
        }
        let th = self.theta;
        match self.effective_family() {
            Family::Independence => Ok(-s),
            Family::Clayton => {
                // log rising factorial a (a+1) ... (a+k-1), summed directly:
                // the ln-gamma difference cancels catastrophically once
                // 1/theta dwarfs k.
                let a = 1.0 / th;
                let ln_poch: f64 = (0..k).map(|j| (a + j as f64).ln()).sum();
                Ok(ln_poch - (a + k as f64) * s.ln_1p())
            }
            Family::Frank => {
                // (1/th) Li_{-(k-1)}(w), w = (1 - e^{-th}) e^{-s}
                let ln_w = (-(-th).exp_m1()).ln() - s;
                let ln_one_minus_w = frank_log_arg(th, s);
                let ln_ratio = ln_w - ln_one_minus_w;
                Ok(special::log_polylog_negint(k - 1, ln_ratio)? - th.ln())
            }
            Family::Gumbel => {
                let alpha = 1.0 / th;
                let table = special::gumbel_table(th, k)?;
                let ln_s = s.ln();
                Ok(-s.powf(alpha) - k as f64 * ln_s + table.log_eval(k, alpha * ln_s))
            }
            Family::Joe => {
                let alpha = 1.0 / th;
                let table = special::joe_table(th, k)?;
                let ln_g = (-(-s).exp_m1()).ln(); // ln(1 - e^{-s})
                let ln_x = -s - ln_g; // ln[(1-g)/g]
                Ok(alpha.ln() - s + (alpha - 1.0) * ln_g + table.log_eval(k, ln_x))
            }
            Family::Amh => {
                // ((1-th)/th) Li_{-k}(w), w = th e^{-s}
                let ln_w = th.ln() - s;
                let one_minus_w = (1.0 - th) - th * (-s).exp_m1();
                let ln_ratio = ln_w - one_minus_w.ln();
                Ok(special::log_polylog_negint(k, ln_ratio)? + (1.0 - th).ln() - th.ln())
            }
        }
    }

    /// k-th derivative of the inverse generator at s > 0.
    pub fn inv_gen_derivative(&self, k: usize, s: f64) -> Result<f64> {
        let ln_mag = self.log_inv_gen_derivative(k, s)?;
        if ln_mag > MAX_EXP_ARG {
            return Err(Error::Overflow("inverse-generator derivative"));
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * ln_mag.exp())
    }

    /// Auxiliary derivative f_i(t) = (d/ds)^{i+1} psi(s) at s = phi(t).
    /// Sign alternates: sgn f_i = (-1)^{i+1}.
    pub fn f_aux(&self, i: usize, t: f64) -> Result<f64> {
        self.check_aux_index(i)?;
        check_open_unit(t, "f_aux")?;
        self.inv_gen_derivative(i + 1, self.phi(t)?)
    }

    /// ln |f_i(t)|; used by the distribution-level code that recombines
    /// these magnitudes with other log-scale factors before exponentiating.
    pub(crate) fn log_abs_f_aux(&self, i: usize, t: f64) -> Result<f64> {
        self.check_aux_index(i)?;
        check_open_unit(t, "f_aux")?;
        self.log_inv_gen_derivative(i + 1, self.phi(t)?)
    }

    fn check_aux_index(&self, i: usize) -> Result<()> {
        if i >= self.dim {
            return Err(Error::parameter(format!(
                "auxiliary derivative index {i} exceeds d - 1 = {}",
                self.dim - 1
            )));
        }
        Ok(())
    }

    /// Monte-Carlo estimate of the (i+1)-th inverse-generator derivative at
    /// s, from m frailty draws: (-1)^{i+1} mean[V^{i+1} e^{-V s}].
    pub fn f_aux_mc(&self, i: usize, s: f64, m: usize, seed: u64) -> Result<f64> {
        if m == 0 {
            return Err(Error::parameter("f_aux_mc requires m >= 1"));
        }
        if !(s > 0.0) {
            return Err(Error::domain(format!("f_aux_mc requires s > 0, got {s}")));
        }
        let vs = crate::sampling::sample_frailties(self, m, seed)?;
        let mut acc = CompensatedSum::new();
        let p = (i + 1) as i32;
        for v in vs {
            acc.add(v.powi(p) * (-v * s).exp());
        }
        let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * acc.total() / m as f64)
    }

    /// Population Kendall rank correlation of the family at this parameter.
    pub fn kendall_tau(&self) -> Result<f64> {
        let th = self.theta;
        Ok(match self.family {
            Family::Independence => 0.0,
            Family::Clayton => th / (th + 2.0),
            Family::Frank => 1.0 + 4.0 * (special::debye1(th)? - 1.0) / th,
            Family::Gumbel => (th - 1.0) / th,
            Family::Joe => {
                let mut sum = 0.0;
                let mut k = 1.0f64;
                loop {
                    let term = 1.0 / (k * (th * k + 2.0) * (th * (k - 1.0) + 2.0));
                    sum += term;
                    if term < 1e-14 || k > 2e6 {
                        break;
                    }
                    k += 1.0;
                }
                1.0 - 4.0 * sum
            }
            Family::Amh => {
                if th < 1e-3 {
                    // series limit of the closed form, stable at the origin
                    2.0 * th / 9.0 + th * th / 18.0
                } else {
                    let one_m = 1.0 - th;
                    1.0 - 2.0 * (th + one_m * one_m * th.ln_1p_neg()) / (3.0 * th * th)
                }
            }
        })
    }

    /// Lower/upper tail-dependence coefficients.
    pub fn tail_dependence(&self) -> TailDependence {
        let th = self.theta;
        match self.family {
            Family::Clayton => TailDependence {
                lower: (-th.recip() * std::f64::consts::LN_2).exp(),
                upper: 0.0,
            },
            Family::Gumbel | Family::Joe => TailDependence {
                lower: 0.0,
                upper: 2.0 - (th.recip() * std::f64::consts::LN_2).exp(),
            },
            _ => TailDependence {
                lower: 0.0,
                upper: 0.0,
            },
        }
    }

    /// Copula CDF C(u) = psi(phi(u_1) + ... + phi(u_d)).
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.check_point_closed(u)?;
        if u.contains(&0.0) {
            return Ok(0.0);
        }
        let mut s = CompensatedSum::new();
        for &x in u {
            s.add(self.phi(x)?);
        }
        self.phi_inv(s.total())
    }

    /// Copula log-density at an interior point.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        self.check_point_open(u)?;
        let mut s = CompensatedSum::new();
        let mut ln_slopes = CompensatedSum::new();
        for &x in u {
            s.add(self.phi(x)?);
            ln_slopes.add(self.log_abs_phi_prime(x)?);
        }
        let total = s.total();
        if total == 0.0 {
            // all coordinates at 1.0 within rounding
            return Err(Error::domain(
                "copula density undefined at the upper corner",
            ));
        }
        Ok(self.log_inv_gen_derivative(self.dim, total)? + ln_slopes.total())
    }

    /// Copula density c(u) = psi^{(d)}(sum phi(u_j)) prod phi'(u_j).
    pub fn density(&self, u: &[f64]) -> Result<f64> {
        let ln = self.log_density(u)?;
        if ln > MAX_EXP_ARG {
            return Err(Error::Overflow("copula density"));
        }
        Ok(ln.exp())
    }

    fn check_point_closed(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::dimension(format!(
                "point has {} coordinates, copula dimension is {}",
                u.len(),
                self.dim
            )));
        }
        for &x in u {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::domain(format!("copula argument {x} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn check_point_open(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::dimension(format!(
                "point has {} coordinates, copula dimension is {}",
                u.len(),
                self.dim
            )));
        }
        for &x in u {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::domain(format!(
                    "density argument {x} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Parameter solving tau = kendall_tau(theta); closed form where available,
/// expanding-bracket bisection otherwise.
pub fn tau_inverse(family: Family, tau: f64) -> Result<f64> {
    if !tau.is_finite() {
        return Err(Error::domain(format!("tau must be finite, got {tau}")));
    }
    let unattainable = |lo: f64, hi: f64| Error::UnattainableTau {
        family: family.name(),
        tau,
        lo,
        hi,
    };
    match family {
        Family::Independence => {
            if tau == 0.0 {
                Ok(0.0)
            } else {
                Err(unattainable(0.0, 0.0))
            }
        }
        Family::Clayton => {
            if tau > 0.0 && tau < 1.0 {
                Ok(2.0 * tau / (1.0 - tau))
            } else {
                Err(unattainable(0.0, 1.0))
            }
        }
        Family::Gumbel => {
            if (0.0..1.0).contains(&tau) {
                Ok(1.0 / (1.0 - tau))
            } else {
                Err(unattainable(0.0, 1.0))
            }
        }
        Family::Frank => bisect_tau(family, tau, 1e-9, 0.0, 1.0, unattainable),
        Family::Joe => bisect_tau(family, tau, 1.0, 0.0, 1.0, unattainable),
        Family::Amh => {
            let cap = CopulaSpec::new(Family::Amh, 1.0 - 1e-9, 2)?.kendall_tau()?;
            if tau == 0.0 {
                return Ok(0.0);
            }
            if tau < 0.0 || tau > cap {
                return Err(unattainable(0.0, 1.0 / 3.0));
            }
            bisect_theta(
                |th| CopulaSpec::new(Family::Amh, th, 2)?.kendall_tau(),
                tau,
                1e-12,
                1.0 - 1e-9,
            )
        }
    }
}

fn bisect_tau(
    family: Family,
    tau: f64,
    theta_lo: f64,
    tau_lo_bound: f64,
    tau_hi_bound: f64,
    unattainable: impl Fn(f64, f64) -> Error,
) -> Result<f64> {
    if tau <= tau_lo_bound && !(family == Family::Joe && tau == 0.0) {
        return Err(unattainable(tau_lo_bound, tau_hi_bound));
    }
    if tau >= tau_hi_bound {
        return Err(unattainable(tau_lo_bound, tau_hi_bound));
    }
    if family == Family::Joe && tau == 0.0 {
        return Ok(1.0);
    }
    let eval = |th: f64| CopulaSpec::new(family, th, 2)?.kendall_tau();
    // expand the upper bracket until it clears the target
    let mut hi = theta_lo.max(1.0) * 2.0;
    let mut guard = 0;
    while eval(hi)? < tau {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(unattainable(tau_lo_bound, tau_hi_bound));
        }
    }
    bisect_theta(eval, tau, theta_lo, hi)
}

fn bisect_theta(
    eval: impl Fn(f64) -> Result<f64>,
    target: f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        if (v - target).abs() < 1e-13 {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_open_unit(t: f64, what: &str) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{what} requires t in (0, 1), got {t}"
        )))
    }
}

fn check_open_closed_unit(t: f64, what: &str) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{what} requires t in (0, 1], got {t}"
        )))
    }
}

/// ln(1 - (1 - e^{-th}) e^{-s}), the Frank inverse-generator log argument,
/// accurate in both tails: log1p when the subtracted mass is small (large s),
/// and a cancellation-free difference of exponentials otherwise.
fn frank_log_arg(th: f64, s: f64) -> f64 {
    let a = -(-s).exp() * (-th).exp_m1(); // (1 - e^{-th}) e^{-s}
    if a < 0.5 {
        (-a).ln_1p()
    } else {
        (-(-s).exp_m1() + (-(s + th)).exp()).ln()
    }
}

/// ln(e^x - 1) without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 40.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// ln(1 - x) for x in [0, 1); helper so AMH tau reads cleanly.
trait Ln1pNeg {
    fn ln_1p_neg(self) -> f64;
}
impl Ln1pNeg for f64 {
    fn ln_1p_neg(self) -> f64 {
        (-self).ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family, theta: f64, dim: usize) -> CopulaSpec {
        CopulaSpec::new(family, theta, dim).unwrap()
    }

    /// (family, theta) grid reused by the derivative-chain checks.
    fn family_grid() -> Vec<CopulaSpec> {
        let mut out = vec![spec(Family::Independence, 0.0, 7)];
        for &th in &[0.3, 1.0, 2.0, 8.0] {
            out.push(spec(Family::Clayton, th, 7));
        }
        for &th in &[0.5, 2.0, 10.0] {
            out.push(spec(Family::Frank, th, 7));
        }
        for &th in &[1.0, 1.5, 3.0, 8.0] {
            out.push(spec(Family::Gumbel, th, 7));
        }
        for &th in &[1.0, 1.8, 5.0] {
            out.push(spec(Family::Joe, th, 7));
        }
        for &th in &[0.0, 0.3, 0.9] {
            out.push(spec(Family::Amh, th, 7));
        }
        out
    }

    #[test]
    fn theta_validation_per_family() {
        assert!(CopulaSpec::new(Family::Clayton, 0.0, 2).is_err());
        assert!(CopulaSpec::new(Family::Clayton, -0.5, 2).is_err());
        assert!(CopulaSpec::new(Family::Frank, 0.0, 2).is_err());
        assert!(CopulaSpec::new(Family::Gumbel, 0.99, 2).is_err());
        assert!(CopulaSpec::new(Family::Gumbel, 1.0, 2).is_ok());
        assert!(CopulaSpec::new(Family::Joe, 0.5, 2).is_err());
        assert!(CopulaSpec::new(Family::Amh, 1.0, 2).is_err());
        assert!(CopulaSpec::new(Family::Amh, -0.2, 2).is_err());
        assert!(CopulaSpec::new(Family::Amh, 0.0, 2).is_ok());
        assert!(CopulaSpec::new(Family::Clayton, f64::NAN, 2).is_err());
        assert!(CopulaSpec::new(Family::Clayton, 1.0, 1).is_err());
    }

    #[test]
    fn phi_reference_values() {
        let c = spec(Family::Clayton, 2.0, 2);
        assert!((c.phi(0.5).unwrap() - 3.0).abs() < 1e-12);
        let ind = spec(Family::Independence, 0.0, 2);
        assert!((ind.phi(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        for s in family_grid() {
            assert!(
                s.phi(1.0).unwrap().abs() < 1e-14,
                "phi(1) != 0 for {}",
                s.family()
            );
        }
        assert!(c.phi(0.0).is_err());
        assert!(c.phi(1.5).is_err());
    }

    #[test]
    fn phi_prime_reference_values() {
        let ind = spec(Family::Independence, 0.0, 2);
        assert!((ind.phi_prime(0.5).unwrap() + 2.0).abs() < 1e-14);
        let c = spec(Family::Clayton, 1.0, 2);
        assert!((c.phi_prime(0.5).unwrap() + 4.0).abs() < 1e-12);
        let g = spec(Family::Gumbel, 1.0, 2);
        let t = (-1.0f64).exp();
        assert!((g.phi_prime(t).unwrap() + std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn phi_prime_matches_finite_difference() {
        for s in family_grid() {
            for &t in &[0.05f64, 0.3, 0.7, 0.95] {
                let h = 1e-6 * t.min(1.0 - t);
                let fd = (s.phi(t + h).unwrap() - s.phi(t - h).unwrap()) / (2.0 * h);
                let got = s.phi_prime(t).unwrap();
                assert!(
                    (got - fd).abs() <= 1e-6 * got.abs().max(1.0),
                    "{} theta={} t={}: {} vs {}",
                    s.family(),
                    s.theta(),
                    t,
                    got,
                    fd
                );
                // log form agrees with the direct form
                let ln = s.log_abs_phi_prime(t).unwrap();
                assert!((ln - (-got).ln()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn log_phi_consistent_and_stable() {
        for s in family_grid() {
            for &t in &[0.05, 0.5, 0.95, 0.999] {
                let lp = s.log_phi(t).unwrap();
                let direct = s.phi(t).unwrap().ln();
                assert!(
                    (lp - direct).abs() <= 1e-10 * direct.abs().max(1.0),
                    "{} theta={} t={t}: {lp} vs {direct}",
                    s.family(),
                    s.theta()
                );
            }
        }
        // extreme parameter where the linear generator overflows
        let c = spec(Family::Clayton, 400.0, 2);
        assert!(c.phi(0.05).unwrap().is_infinite());
        let lp = c.log_phi(0.05).unwrap();
        assert!((lp + 400.0 * (0.05f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn phi_inv_round_trip() {
        for s in family_grid() {
            for &t in &[1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999999] {
                let round = s.phi_inv(s.phi(t).unwrap()).unwrap();
                assert!(
                    (round - t).abs() <= 1e-12 * t.max(1e-12),
                    "{} theta={} t={}: round trip {}",
                    s.family(),
                    s.theta(),
                    t,
                    round
                );
            }
            assert!((s.phi_inv(0.0).unwrap() - 1.0).abs() < 1e-15);
            assert!(s.phi_inv(-1.0).is_err());
            // decreasing in s
            assert!(s.phi_inv(0.5).unwrap() > s.phi_inv(1.5).unwrap());
        }
    }

    #[test]
    fn f_aux_reference_values() {
        let ind = spec(Family::Independence, 0.0, 4);
        assert!((ind.f_aux(2, 0.3).unwrap() + 0.3).abs() < 1e-14);
        let c1 = spec(Family::Clayton, 1.0, 3);
        assert!((c1.f_aux(0, 0.5).unwrap() + 0.25).abs() < 1e-12);
        let c05 = spec(Family::Clayton, 0.5, 3);
        assert!((c05.f_aux(1, 0.5).unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn f_aux_sign_alternation() {
        for s in family_grid() {
            for i in 0..=5usize {
                for &t in &[0.1, 0.5, 0.9] {
                    let f = s.f_aux(i, t).unwrap();
                    let expect_sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
                    assert!(
                        f * expect_sign > 0.0,
                        "{} theta={} i={i} t={t}: f={f}",
                        s.family(),
                        s.theta()
                    );
                }
            }
        }
    }

    #[test]
    fn f_aux_zero_is_inverse_slope() {
        for s in family_grid() {
            for &t in &[0.05, 0.4, 0.95] {
                let f0 = s.f_aux(0, t).unwrap();
                let slope = s.phi_prime(t).unwrap();
                assert!(
                    (f0 * slope - 1.0).abs() < 1e-10,
                    "{} theta={} t={t}",
                    s.family(),
                    s.theta()
                );
            }
        }
    }

    #[test]
    fn f_aux_recursion_chain() {
        // f_i(t) = f_{i-1}'(t) / phi'(t); first-order central differences of
        // the previous closed form validate each next order independently.
        for s in family_grid() {
            for &t in &[0.15f64, 0.5, 0.85] {
                for i in 1..=5usize {
                    let h = 3e-6 * t.min(1.0 - t);
                    let up = s.f_aux(i - 1, t + h).unwrap();
                    let dn = s.f_aux(i - 1, t - h).unwrap();
                    let fd = (up - dn) / (2.0 * h) / s.phi_prime(t).unwrap();
                    let got = s.f_aux(i, t).unwrap();
                    assert!(
                        (got - fd).abs() <= 2e-5 * got.abs().max(1e-8),
                        "{} theta={} i={i} t={t}: {got} vs {fd}",
                        s.family(),
                        s.theta()
                    );
                }
            }
        }
    }

    #[test]
    fn inv_gen_derivative_matches_high_order_stencils() {
        // direct central stencils on psi itself for orders 1..3
        for s in family_grid() {
            for &sv in &[0.4f64, 1.0, 2.5] {
                let psi = |x: f64| s.phi_inv(x).unwrap();
                let h1 = 1e-5 * sv.max(0.5);
                let d1 = (psi(sv + h1) - psi(sv - h1)) / (2.0 * h1);
                let got1 = s.inv_gen_derivative(1, sv).unwrap();
                assert!((got1 - d1).abs() <= 1e-5 * got1.abs().max(1e-6));

                let h2 = 2e-4 * sv.max(0.5);
                let d2 = (psi(sv + h2) - 2.0 * psi(sv) + psi(sv - h2)) / (h2 * h2);
                let got2 = s.inv_gen_derivative(2, sv).unwrap();
                assert!(
                    (got2 - d2).abs() <= 1e-5 * got2.abs().max(1e-5),
                    "{} theta={} s={sv}: {got2} vs {d2}",
                    s.family(),
                    s.theta()
                );

                let h3 = 1e-3 * sv.max(0.5);
                let d3 = (-psi(sv - 2.0 * h3) + 2.0 * psi(sv - h3) - 2.0 * psi(sv + h3)
                    + psi(sv + 2.0 * h3))
                    / (2.0 * h3 * h3 * h3);
                let got3 = s.inv_gen_derivative(3, sv).unwrap();
                assert!(
                    (got3 - d3).abs() <= 2e-4 * got3.abs().max(1e-4),
                    "{} theta={} s={sv}: {got3} vs {d3}",
                    s.family(),
                    s.theta()
                );
            }
        }
    }

    #[test]
    fn f_aux_overflow_reported() {
        // Gamma(7 + 1/theta)/Gamma(1/theta) with 1/theta ~ 1e300 overflows
        let s = spec(Family::Clayton, 1e-300, 7);
        assert!(matches!(s.f_aux(6, 0.5), Err(Error::Overflow(_))));
    }

    #[test]
    fn kendall_tau_reference_values() {
        assert!((spec(Family::Clayton, 2.0, 2).kendall_tau().unwrap() - 0.5).abs() < 1e-14);
        assert!((spec(Family::Gumbel, 2.0, 2).kendall_tau().unwrap() - 0.5).abs() < 1e-14);
        let frank = spec(Family::Frank, 1.0, 2).kendall_tau().unwrap();
        assert!((frank - 0.11002).abs() < 1e-5, "frank tau(1) = {frank}");
        // Joe at theta = 1 is independence
        assert!(spec(Family::Joe, 1.0, 2).kendall_tau().unwrap().abs() < 1e-9);
        // AMH upper range stays below 1/3
        let amh_hi = spec(Family::Amh, 0.999999, 2).kendall_tau().unwrap();
        assert!(amh_hi < 1.0 / 3.0 && amh_hi > 0.32);
        // AMH series branch agrees with the closed form at the same theta
        let th = 0.000999f64;
        let series = spec(Family::Amh, th, 2).kendall_tau().unwrap();
        let one_m = 1.0 - th;
        let closed = 1.0 - 2.0 * (th + one_m * one_m * (-th).ln_1p()) / (3.0 * th * th);
        assert!(
            (series - closed).abs() < 1e-9,
            "series {series} vs closed {closed}"
        );
        // and crossing the switch moves tau only by the smooth slope
        let lo = spec(Family::Amh, 0.000999, 2).kendall_tau().unwrap();
        let hi = spec(Family::Amh, 0.001001, 2).kendall_tau().unwrap();
        assert!(hi > lo && hi - lo < 1e-6, "jump {} at switch", hi - lo);
    }

    #[test]
    fn tau_inverse_round_trips() {
        let cases = [(Family::Clayton, 0.5, 2.0), (Family::Gumbel, 0.5, 2.0)];
        for (fam, tau, theta) in cases {
            assert!((tau_inverse(fam, tau).unwrap() - theta).abs() < 1e-12);
        }
        for fam in [Family::Clayton, Family::Frank, Family::Gumbel, Family::Joe] {
            for &tau in &[0.05, 0.3, 0.6, 0.9] {
                let th = tau_inverse(fam, tau).unwrap();
                let back = CopulaSpec::new(fam, th, 2).unwrap().kendall_tau().unwrap();
                assert!((back - tau).abs() < 1e-8, "{fam} tau={tau}: back={back}");
            }
        }
        for &tau in &[0.05, 0.2, 0.32] {
            let th = tau_inverse(Family::Amh, tau).unwrap();
            let back = CopulaSpec::new(Family::Amh, th, 2)
                .unwrap()
                .kendall_tau()
                .unwrap();
            assert!((back - tau).abs() < 1e-8);
        }
    }

    #[test]
    fn tau_inverse_unattainable() {
        assert!(matches!(
            tau_inverse(Family::Amh, 0.5),
            Err(Error::UnattainableTau { .. })
        ));
        assert!(tau_inverse(Family::Clayton, -0.2).is_err());
        assert!(tau_inverse(Family::Gumbel, 1.0).is_err());
        assert!(tau_inverse(Family::Independence, 0.1).is_err());
        assert!((tau_inverse(Family::Independence, 0.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn tail_dependence_reference_values() {
        let c = spec(Family::Clayton, 1.0, 2).tail_dependence();
        assert!((c.lower - 0.5).abs() < 1e-12);
        assert_eq!(c.upper, 0.0);
        let g = spec(Family::Gumbel, 2.0, 2).tail_dependence();
        assert!((g.upper - (2.0 - std::f64::consts::SQRT_2)).abs() < 1e-12);
        assert_eq!(g.lower, 0.0);
        let f = spec(Family::Frank, 5.0, 2).tail_dependence();
        assert_eq!((f.lower, f.upper), (0.0, 0.0));
        let j = spec(Family::Joe, 2.0, 2).tail_dependence();
        assert!((j.upper - (2.0 - std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn cdf_reference_values() {
        let c = spec(Family::Clayton, 1.0, 2);
        assert!((c.cdf(&[0.5, 0.5]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let c2 = spec(Family::Clayton, 2.0, 2);
        let expect = (0.5f64.powi(-2) + 0.5f64.powi(-2) - 1.0).powf(-0.5);
        assert!((c2.cdf(&[0.5, 0.5]).unwrap() - expect).abs() < 1e-12);
        let ind = spec(Family::Independence, 0.0, 3);
        assert!((ind.cdf(&[0.2, 0.5, 0.8]).unwrap() - 0.08).abs() < 1e-14);
    }

    #[test]
    fn cdf_uniform_margins_property() {
        for s in family_grid() {
            let s2 = CopulaSpec::new(s.family(), s.theta(), 3).unwrap();
            for &v in &[0.1, 0.5, 0.9] {
                let got = s2.cdf(&[1.0, 1.0, v]).unwrap();
                assert!(
                    (got - v).abs() < 1e-10,
                    "{} theta={} margin at {v}: {got}",
                    s.family(),
                    s.theta()
                );
            }
            assert_eq!(s2.cdf(&[0.0, 0.5, 0.9]).unwrap(), 0.0);
        }
    }

    #[test]
    fn cdf_rejects_bad_points() {
        let c = spec(Family::Clayton, 1.0, 2);
        assert!(c.cdf(&[0.5]).is_err());
        assert!(c.cdf(&[0.5, 1.2]).is_err());
        assert!(c.cdf(&[0.5, -0.1]).is_err());
    }

    #[test]
    fn density_reference_values() {
        let c = spec(Family::Clayton, 1.0, 2);
        let got = c.density(&[0.5, 0.5]).unwrap();
        assert!((got - 32.0 / 27.0).abs() < 1e-10, "clayton density {got}");
        let ind = spec(Family::Independence, 0.0, 4);
        assert!((ind.density(&[0.3, 0.6, 0.2, 0.9]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_consistent_with_cdf_differences() {
        // mixed second difference of the CDF approximates the density (d=2)
        for s in family_grid() {
            let s2 = CopulaSpec::new(s.family(), s.theta(), 2).unwrap();
            for &(u, v) in &[(0.3, 0.6), (0.5, 0.5), (0.8, 0.2)] {
                let h = 1e-4;
                let c = |a: f64, b: f64| s2.cdf(&[a, b]).unwrap();
                let fd = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h))
                    / (4.0 * h * h);
                let got = s2.density(&[u, v]).unwrap();
                assert!(
                    (got - fd).abs() <= 2e-4 * got.max(1.0),
                    "{} theta={} at ({u},{v}): {got} vs {fd}",
                    s.family(),
                    s.theta()
                );
            }
        }
    }

    #[test]
    fn density_integrates_to_one_bivariate() {
        use crate::quad::{integrate, QuadConfig};
        let cfg = QuadConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            ..QuadConfig::default()
        };
        for s in [
            spec(Family::Clayton, 2.0, 2),
            spec(Family::Gumbel, 2.5, 2),
            spec(Family::Frank, 4.0, 2),
            spec(Family::Amh, 0.6, 2),
        ] {
            let outer = integrate(
                |u| {
                    integrate(|v| s.density(&[u, v]).unwrap(), 1e-9, 1.0 - 1e-9, &cfg)
                        .unwrap()
                        .value
                },
                1e-9,
                1.0 - 1e-9,
                &cfg,
            )
            .unwrap();
            assert!(
                (outer.value - 1.0).abs() < 1e-6,
                "{} theta={}: mass {}",
                s.family(),
                s.theta(),
                outer.value
            );
        }
    }

    #[test]
    fn family_parsing() {
        assert_eq!("clayton".parse::<Family>().unwrap(), Family::Clayton);
        assert_eq!("AMH".parse::<Family>().unwrap(), Family::Amh);
        assert!("gaussian".parse::<Family>().is_err());
    }
}
