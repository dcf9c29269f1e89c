//! Copula parameter estimation on uniform panels: pseudo-observations,
//! one-parameter maximum likelihood, and an upper-tail goodness-of-fit
//! distance.
//!
//! The likelihood is maximized by a bracketed one-dimensional search on a
//! transformed-to-the-real-line parameter, started from the Kendall-tau
//! inverse of the (average pairwise) sample tau.  Standard errors come
//! from the negated numerical second derivative of the log-likelihood at
//! the optimum.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{tau_inverse, CopulaSpec, Family};
use crate::optim::minimize_brent;
use crate::sampling::UniformPanel;
use crate::util::sample_kendall_tau;

/// Minimum number of panel rows accepted by the copula fitter.
pub const MIN_FIT_ROWS: usize = 50;
/// Maximum number of lattice points evaluated by the tail distance.
const MAX_LATTICE_POINTS: u128 = 10_000;
/// Lattice resolution per axis for the tail distance.
const LATTICE_PER_AXIS: usize = 5;

/// Provenance of the uniform panel a copula was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    /// Inference functions for margins: the panel is a PIT of fitted
    /// parametric margins.
    Ifm,
    /// Pseudo maximum likelihood: the panel is rank pseudo-observations.
    Pml,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMethod::Ifm => "ifm",
            FitMethod::Pml => "pml",
        })
    }
}

/// Maximum-likelihood fit of a one-parameter Archimedean family.
#[derive(Debug, Clone)]
pub struct CopulaFit {
    pub spec: CopulaSpec,
    /// Standard error of theta from the observed information; NaN when the
    /// curvature is unusable (e.g. at a range boundary).
    pub stderr: f64,
    pub loglik: f64,
    pub method: FitMethod,
    /// Warning flag: the optimum sits within 1e-6 of the parameter range
    /// boundary, so the estimate and its standard error are suspect.
    pub boundary: bool,
}

impl CopulaFit {
    /// Relabels the panel provenance (the default is [`FitMethod::Pml`]).
    pub fn with_method(mut self, method: FitMethod) -> Self {
        self.method = method;
        self
    }

    /// Flat key-value serialization (one `key value` pair per line).
    pub fn to_key_value(&self) -> String {
        format!(
            "family {}\ntheta {:?}\ndim {}\nstderr {:?}\nloglik {:?}\nmethod {}\nboundary {}\n",
            self.spec.family().name(),
            self.spec.theta(),
            self.spec.dim(),
            self.stderr,
            self.loglik,
            self.method,
            self.boundary
        )
    }

    /// Parses the format produced by [`to_key_value`](Self::to_key_value).
    pub fn from_key_value(text: &str) -> Result<CopulaFit> {
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
                .ok_or_else(|| Error::data(format!("copula block is missing key '{key}'")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::data(format!("bad numeric value for '{key}': {e}")))
        };
        let family: Family = get("family")?.parse()?;
        let dim: usize = get("dim")?
            .parse()
            .map_err(|e| Error::data(format!("bad dimension: {e}")))?;
        let method = match get("method")?.as_str() {
            "ifm" => FitMethod::Ifm,
            "pml" => FitMethod::Pml,
            other => return Err(Error::data(format!("unknown fit method '{other}'"))),
        };
        let boundary = get("boundary")?
            .parse::<bool>()
            .map_err(|e| Error::data(format!("bad boundary flag: {e}")))?;
        Ok(CopulaFit {
            spec: CopulaSpec::new(family, num("theta")?, dim)?,
            stderr: num("stderr")?,
            loglik: num("loglik")?,
            method,
            boundary,
        })
    }
}

// ---------------------------------------------------------------------------
// pseudo-observations
// ---------------------------------------------------------------------------

/// Average ranks (1-based, ties averaged).
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank pseudo-observations u_ij = rank(x_ij) / (T+1), ties averaged.
/// Columns of equal length; at least two rows so ranks are defined (the
/// copula fitter separately requires [`MIN_FIT_ROWS`]).
pub fn pseudo_observations(columns: &[Vec<f64>]) -> Result<UniformPanel> {
    if columns.is_empty() {
        return Err(Error::dimension("need at least one column"));
    }
    let t = columns[0].len();
    if t < 2 {
        return Err(Error::data(
            "pseudo-observations need at least two rows per column",
        ));
    }
    for (j, col) in columns.iter().enumerate() {
        if col.len() != t {
            return Err(Error::dimension(format!(
                "column {j} has length {}, expected {t}",
                col.len()
            )));
        }
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "column {j} has a non-finite entry at row {i}"
            )));
        }
    }
    let scale = 1.0 / (t as f64 + 1.0);
    let ranked: Vec<Vec<f64>> = columns.iter().map(|c| average_ranks(c)).collect();
    let rows: Vec<Vec<f64>> = (0..t)
        .map(|i| ranked.iter().map(|r| r[i] * scale).collect())
        .collect();
    UniformPanel::from_rows(columns.len(), &rows)
}

// ---------------------------------------------------------------------------
// likelihood
// ---------------------------------------------------------------------------

/// Pairwise (cascade) summation: deterministic and accurate regardless of
/// how the terms were produced.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Copula log-likelihood of a panel: sum of log densities over rows,
/// evaluated in parallel with a deterministic reduction order.
pub fn copula_loglik(panel: &UniformPanel, spec: &CopulaSpec) -> Result<f64> {
    if panel.dim() != spec.dim() {
        return Err(Error::dimension(format!(
            "panel dimension {} does not match copula dimension {}",
            panel.dim(),
            spec.dim()
        )));
    }
    let terms: Vec<Result<f64>> = (0..panel.n_rows())
        .into_par_iter()
        .map(|i| spec.log_density(panel.row(i)))
        .collect();
    let mut values = Vec::with_capacity(terms.len());
    for (i, term) in terms.into_iter().enumerate() {
        match term {
            Ok(v) => values.push(v),
            Err(e) => {
                return Err(Error::data(format!(
                    "copula density is singular at panel row {i}: {e}"
                )))
            }
        }
    }
    Ok(pairwise_sum(&values))
}

/// Search-time negative log-likelihood: density failures at trial
/// parameters are mapped to +inf so the optimizer backs away.
fn neg_loglik_search(panel: &UniformPanel, spec: &CopulaSpec) -> f64 {
    let terms: Vec<f64> = (0..panel.n_rows())
        .into_par_iter()
        .map(|i| spec.log_density(panel.row(i)).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let ll = pairwise_sum(&terms);
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

/// Practical search range for theta in natural coordinates.
fn natural_caps(family: Family) -> (f64, f64) {
    match family {
        Family::Clayton | Family::Frank => (1e-6, 500.0),
        Family::Gumbel | Family::Joe => (1.0 + 1e-8, 500.0),
        Family::Amh => (1e-8, 1.0 - 1e-8),
        Family::Independence => (0.0, 0.0),
    }
}

fn theta_to_free(family: Family, theta: f64) -> f64 {
    match family {
        Family::Clayton | Family::Frank => theta.ln(),
        Family::Gumbel | Family::Joe => (theta - 1.0).ln(),
        _ => (theta / (1.0 - theta)).ln(),
    }
}

fn theta_from_free(family: Family, w: f64) -> f64 {
    match family {
        Family::Clayton | Family::Frank => w.exp(),
        Family::Gumbel | Family::Joe => 1.0 + w.exp(),
        _ => 1.0 / (1.0 + (-w).exp()),
    }
}

/// Clamps a sample tau into the family's attainable open range so the
/// tau inverse provides a usable starting point.
fn clamp_tau(family: Family, tau: f64) -> f64 {
    match family {
        Family::Amh => tau.clamp(1e-4, 0.32),
        _ => tau.clamp(1e-4, 0.95),
    }
}

/// Average pairwise sample Kendall tau of the panel columns.
fn average_pairwise_tau(panel: &UniformPanel) -> f64 {
    let d = panel.dim();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| panel.column(j)).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..d {
        for k in j + 1..d {
            total += sample_kendall_tau(&cols[j], &cols[k]);
            count += 1;
        }
    }
    total / count as f64
}

/// Maximum-likelihood estimate of the family parameter on a uniform panel.
///
/// The search runs on a transformed parameter over a bracket centered at
/// the tau-inverse start and widens the bracket when the optimum lands on
/// its edge.  The returned fit is labeled [`FitMethod::Pml`]; relabel with
/// [`CopulaFit::with_method`] when the panel came from parametric PITs.
pub fn fit_copula_mle(panel: &UniformPanel, family: Family) -> Result<CopulaFit> {
    if family == Family::Independence {
        return Err(Error::parameter(
            "the independence copula has no parameter to fit",
        ));
    }
    if panel.dim() < 2 {
        return Err(Error::dimension("copula fitting needs at least 2 columns"));
    }
    if panel.n_rows() < MIN_FIT_ROWS {
        return Err(Error::data(format!(
            "copula fitting needs at least {MIN_FIT_ROWS} rows, got {}",
            panel.n_rows()
        )));
    }

    let (nat_lo, nat_hi) = natural_caps(family);
    let cap_lo = theta_to_free(family, nat_lo);
    let cap_hi = theta_to_free(family, nat_hi);
    let tau0 = clamp_tau(family, average_pairwise_tau(panel));
    let theta0 = tau_inverse(family, tau0)?.clamp(nat_lo, nat_hi);
    let w0 = theta_to_free(family, theta0);

    let objective = |w: f64| match CopulaSpec::new(family, theta_from_free(family, w), panel.dim())
    {
        Ok(spec) => neg_loglik_search(panel, &spec),
        Err(_) => f64::INFINITY,
    };

    let mut lo = (w0 - 4.0).max(cap_lo);
    let mut hi = (w0 + 4.0).min(cap_hi);
    let mut best = minimize_brent(objective, lo, hi, 1e-9, 200);
    for _ in 0..8 {
        let width = hi - lo;
        let mut widened = false;
        if best.x - lo < 1e-3 && lo > cap_lo {
            lo = (lo - 2.0 * width).max(cap_lo);
            widened = true;
        }
        if hi - best.x < 1e-3 && hi < cap_hi {
            hi = (hi + 2.0 * width).min(cap_hi);
            widened = true;
        }
        if !widened {
            break;
        }
        best = minimize_brent(objective, lo, hi, 1e-9, 200);
    }
    if !best.value.is_finite() {
        return Err(Error::data(
            "copula likelihood is not finite anywhere in the parameter range",
        ));
    }

    let theta_hat = theta_from_free(family, best.x);
    let spec_hat = CopulaSpec::new(family, theta_hat, panel.dim())?;
    let loglik = copula_loglik(panel, &spec_hat)?;

    let boundary = theta_hat - nat_lo <= 1e-6 || nat_hi - theta_hat <= 1e-6 * nat_hi.max(1.0);

    // observed-information standard error on the natural scale
    let stderr = {
        let h = (1e-3 * theta_hat.abs()).max(1e-5);
        let h = h
            .min(0.5 * (theta_hat - nat_lo))
            .min(0.5 * (nat_hi - theta_hat));
        if h > 0.0 {
            let ll_at = |th: f64| match CopulaSpec::new(family, th, panel.dim()) {
                Ok(s) => -neg_loglik_search(panel, &s),
                Err(_) => f64::NEG_INFINITY,
            };
            let second = (ll_at(theta_hat + h) + ll_at(theta_hat - h) - 2.0 * loglik) / (h * h);
            if second < 0.0 {
                (-second).sqrt().recip()
            } else {
                f64::NAN
            }
        } else {
            f64::NAN
        }
    };

    Ok(CopulaFit {
        spec: spec_hat,
        stderr,
        loglik,
        method: FitMethod::Pml,
        boundary,
    })
}

// ---------------------------------------------------------------------------
// goodness of fit: upper-tail distance
// ---------------------------------------------------------------------------

/// Empirical copula of the panel at a point: the fraction of rows lying
/// componentwise at or below `w`.
pub fn empirical_copula(panel: &UniformPanel, w: &[f64]) -> f64 {
    let hits = panel
        .rows()
        .filter(|row| row.iter().zip(w).all(|(u, b)| u <= b))
        .count();
    hits as f64 / panel.n_rows() as f64
}

/// The deterministic evaluation lattice on [gamma, 1]^d: 5 equispaced
/// points per axis, tensorized, subsampled by a fixed stride to at most
/// 10^4 points.
fn tail_lattice(dim: usize, gamma: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..LATTICE_PER_AXIS)
        .map(|k| gamma + (1.0 - gamma) * k as f64 / (LATTICE_PER_AXIS - 1) as f64)
        .collect();
    let total = (LATTICE_PER_AXIS as u128).pow(dim as u32);
    let stride = total.div_ceil(MAX_LATTICE_POINTS);
    let count = total.div_ceil(stride);
    (0..count)
        .map(|t| {
            let mut idx = t * stride;
            (0..dim)
                .map(|_| {
                    let digit = (idx % LATTICE_PER_AXIS as u128) as usize;
                    idx /= LATTICE_PER_AXIS as u128;
                    axis[digit]
                })
                .collect()
        })
        .collect()
}

/// Mean absolute distance between an arbitrary copula-like evaluator and
/// the fitted CDF over the tail lattice; the public entry point plugs in
/// the empirical copula.
fn tail_distance_with<F>(emp: F, fitted: &CopulaSpec, gamma: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::parameter(format!(
            "tail threshold gamma must lie in (0,1), got {gamma}"
        )));
    }
    let points = tail_lattice(fitted.dim(), gamma);
    let diffs: Vec<Result<f64>> = points
        .par_iter()
        .map(|w| Ok((emp(w)? - fitted.cdf(w)?).abs()))
        .collect();
    let mut values = Vec::with_capacity(diffs.len());
    for d in diffs {
        values.push(d?);
    }
    Ok(pairwise_sum(&values) / values.len() as f64)
}

/// Upper-tail goodness-of-fit distance d_gamma: mean absolute deviation
/// between the empirical copula of the panel and the fitted CDF on the
/// tail lattice.  Smaller is better.
pub fn gof_tail_distance(panel: &UniformPanel, fitted: &CopulaSpec, gamma: f64) -> Result<f64> {
    if panel.dim() != fitted.dim() {
        return Err(Error::dimension(format!(
            "panel dimension {} does not match copula dimension {}",
            panel.dim(),
            fitted.dim()
        )));
    }
    tail_distance_with(|w| Ok(empirical_copula(panel, w)), fitted, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_copula;

    #[test]
    fn pseudo_observations_reference_column() {
        let panel = pseudo_observations(&[vec![3.1, 1.2, 7.5]]).unwrap();
        let u: Vec<f64> = panel.column(0);
        assert_eq!(u, vec![0.5, 0.25, 0.75]);
    }

    #[test]
    fn pseudo_observations_average_ties() {
        let panel = pseudo_observations(&[vec![1.0, 2.0, 2.0, 3.0]]).unwrap();
        assert_eq!(panel.column(0), vec![0.2, 0.5, 0.5, 0.8]);
    }

    #[test]
    fn pseudo_observations_invariant_under_monotone_maps() {
        let x: Vec<f64> = (0..80).map(|i| ((i * 37 % 80) as f64).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).exp() + 1.0).collect();
        let a = pseudo_observations(std::slice::from_ref(&x)).unwrap();
        let b = pseudo_observations(&[y]).unwrap();
        assert_eq!(a.column(0), b.column(0));
        // columns over distinct values are permutations of i/(T+1)
        let mut u = a.column(0);
        u.sort_by(|p, q| p.partial_cmp(q).unwrap());
        for (i, v) in u.iter().enumerate() {
            assert!((v - (i + 1) as f64 / 81.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pseudo_observations_rejects_bad_input() {
        assert!(pseudo_observations(&[]).is_err());
        assert!(pseudo_observations(&[vec![1.0]]).is_err());
        assert!(pseudo_observations(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(pseudo_observations(&[vec![1.0, f64::INFINITY]]).is_err());
    }

    #[test]
    fn loglik_matches_serial_evaluation() {
        let spec = CopulaSpec::new(Family::Clayton, 2.0, 3).unwrap();
        let panel = sample_copula(&spec, 500, 7).unwrap();
        let parallel = copula_loglik(&panel, &spec).unwrap();
        let serial: f64 = panel.rows().map(|r| spec.log_density(r).unwrap()).sum();
        assert!((parallel - serial).abs() < 1e-9 * serial.abs().max(1.0));
        // repeated evaluation is bitwise stable
        assert_eq!(parallel, copula_loglik(&panel, &spec).unwrap());
    }

    #[test]
    fn fit_recovers_clayton_theta() {
        let truth = CopulaSpec::new(Family::Clayton, 2.0, 7).unwrap();
        let panel = sample_copula(&truth, 5000, 31).unwrap();
        let fit = fit_copula_mle(&panel, Family::Clayton).unwrap();
        assert!(fit.stderr.is_finite() && fit.stderr > 0.0);
        assert!(
            (fit.spec.theta() - 2.0).abs() <= 3.0 * fit.stderr,
            "theta {} se {}",
            fit.spec.theta(),
            fit.stderr
        );
        assert!(!fit.boundary);
        assert_eq!(fit.method, FitMethod::Pml);

        // ascent over the tau-inverse starting point
        let tau = average_pairwise_tau(&panel);
        let theta0 = tau_inverse(Family::Clayton, clamp_tau(Family::Clayton, tau)).unwrap();
        let start_spec = CopulaSpec::new(Family::Clayton, theta0, 7).unwrap();
        let start_ll = copula_loglik(&panel, &start_spec).unwrap();
        assert!(fit.loglik >= start_ll - 1e-9);
    }

    #[test]
    fn fit_gumbel_standard_error_scale() {
        let truth = CopulaSpec::new(Family::Gumbel, 1.57, 7).unwrap();
        let panel = sample_copula(&truth, 1360, 57).unwrap();
        let fit = fit_copula_mle(&panel, Family::Gumbel).unwrap();
        assert!(
            (fit.spec.theta() - 1.57).abs() <= 3.0 * fit.stderr,
            "theta {} se {}",
            fit.spec.theta(),
            fit.stderr
        );
        assert!(
            fit.stderr > 0.003 && fit.stderr < 0.08,
            "stderr {}",
            fit.stderr
        );
    }

    #[test]
    fn independence_panel_fitted_as_gumbel_sits_near_one() {
        let indep = CopulaSpec::independence(3).unwrap();
        let panel = sample_copula(&indep, 2000, 5).unwrap();
        let fit = fit_copula_mle(&panel, Family::Gumbel).unwrap();
        assert!(fit.spec.theta() < 1.05, "theta {}", fit.spec.theta());
        assert_eq!(fit.boundary, fit.spec.theta() - 1.0 <= 1e-6);
    }

    #[test]
    fn overdependent_panel_pegs_amh_at_boundary() {
        // Clayton theta=3 has tau = 0.6, far above AMH's attainable range,
        // so the AMH likelihood pushes theta to its upper boundary
        let truth = CopulaSpec::new(Family::Clayton, 3.0, 2).unwrap();
        let panel = sample_copula(&truth, 1500, 12).unwrap();
        let fit = fit_copula_mle(&panel, Family::Amh).unwrap();
        assert!(fit.boundary, "theta {}", fit.spec.theta());
        assert!(fit.spec.theta() > 1.0 - 1e-6);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let indep = CopulaSpec::independence(2).unwrap();
        let panel = sample_copula(&indep, 100, 3).unwrap();
        assert!(fit_copula_mle(&panel, Family::Independence).is_err());
        let small = sample_copula(&indep, 30, 3).unwrap();
        assert!(fit_copula_mle(&small, Family::Clayton).is_err());
    }

    #[test]
    fn empirical_copula_counts_dominated_rows() {
        let rows = vec![vec![0.2, 0.3], vec![0.6, 0.7], vec![0.9, 0.1]];
        let panel = UniformPanel::from_rows(2, &rows).unwrap();
        assert!((empirical_copula(&panel, &[0.65, 0.75]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(empirical_copula(&panel, &[0.1, 0.1]), 0.0);
        assert_eq!(empirical_copula(&panel, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn tail_lattice_is_bounded_and_deterministic() {
        let small = tail_lattice(2, 0.8);
        assert_eq!(small.len(), 25);
        assert!(small
            .iter()
            .all(|w| w.iter().all(|&v| (0.8..=1.0).contains(&v))));
        let big = tail_lattice(7, 0.9);
        assert!(big.len() <= 10_000, "got {}", big.len());
        assert_eq!(big, tail_lattice(7, 0.9));
    }

    #[test]
    fn copula_fit_key_value_round_trip() {
        let fit = CopulaFit {
            spec: CopulaSpec::new(Family::Joe, std::f64::consts::E, 4).unwrap(),
            stderr: 0.0123456789012345,
            loglik: -1234.5678901234567,
            method: FitMethod::Ifm,
            boundary: true,
        };
        let back = CopulaFit::from_key_value(&fit.to_key_value()).unwrap();
        assert_eq!(back.spec.family(), Family::Joe);
        assert_eq!(back.spec.theta(), fit.spec.theta());
        assert_eq!(back.spec.dim(), 4);
        assert_eq!(back.stderr, fit.stderr);
        assert_eq!(back.loglik, fit.loglik);
        assert_eq!(back.method, FitMethod::Ifm);
        assert!(back.boundary);
        assert!(CopulaFit::from_key_value("family joe\n").is_err());
    }

    #[test]
    fn tail_distance_to_itself_is_zero() {
        let spec = CopulaSpec::new(Family::Gumbel, 2.0, 3).unwrap();
        let d = tail_distance_with(|w| spec.cdf(w), &spec, 0.8).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn tail_distance_shrinks_with_sample_size() {
        let truth = CopulaSpec::new(Family::Clayton, 2.0, 2).unwrap();
        let mut previous = f64::INFINITY;
        for (n, seed) in [(1_000usize, 41u64), (10_000, 42), (100_000, 43)] {
            let panel = sample_copula(&truth, n, seed).unwrap();
            let fit = fit_copula_mle(&panel, Family::Clayton).unwrap();
            let d = gof_tail_distance(&panel, &fit.spec, 0.8).unwrap();
            assert!(d < previous, "n={n}: {d} !< {previous}");
            previous = d;
        }
    }

    #[test]
    fn correct_family_wins_tail_distance() {
        // generate from Clayton; the Clayton fit must beat a Frank fit in
        // the upper tail, and same for a Gumbel truth vs an AMH fit
        let n = 100_000;
        let clayton = CopulaSpec::new(Family::Clayton, 2.0, 2).unwrap();
        let panel = sample_copula(&clayton, n, 77).unwrap();
        let own = fit_copula_mle(&panel, Family::Clayton).unwrap();
        let wrong = fit_copula_mle(&panel, Family::Frank).unwrap();
        let d_own = gof_tail_distance(&panel, &own.spec, 0.9).unwrap();
        let d_wrong = gof_tail_distance(&panel, &wrong.spec, 0.9).unwrap();
        assert!(d_own < d_wrong, "clayton {d_own} vs frank {d_wrong}");

        let gumbel = CopulaSpec::new(Family::Gumbel, 2.0, 2).unwrap();
        let panel = sample_copula(&gumbel, n, 78).unwrap();
        let own = fit_copula_mle(&panel, Family::Gumbel).unwrap();
        let wrong = fit_copula_mle(&panel, Family::Amh).unwrap();
        let d_own = gof_tail_distance(&panel, &own.spec, 0.9).unwrap();
        let d_wrong = gof_tail_distance(&panel, &wrong.spec, 0.9).unwrap();
        assert!(d_own < d_wrong, "gumbel {d_own} vs amh {d_wrong}");
    }
}
