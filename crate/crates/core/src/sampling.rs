//! Random variate generation for Archimedean copulas via their frailty
//! (mixing) representation: draw a positive variable V whose Laplace
//! transform is the inverse generator, then set U_j = psi(E_j / V) with
//! independent unit exponentials E_j.
//!
//! Each family's frailty law is sampled exactly: Gamma for Clayton, positive
//! stable (Kanter's method) for Gumbel, logarithmic-series (Kemp's
//! two-uniform scheme) for Frank, Sibuya for Joe, and geometric for
//! Ali-Mikhail-Haq. Panels are generated row-parallel with one counter-mode
//! RNG stream per row, so output is identical for a given seed no matter how
//! rayon schedules the work.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::generators::{CopulaSpec, Family};
use crate::portfolio::PortfolioSpec;
use crate::util::mix_seed;

const FRAILTY_TAG: u64 = 0x6672_6169;
const PANEL_TAG: u64 = 0x7061_6e65;

/// Largest double strictly below 1; panel entries are clamped inside the
/// open unit interval so downstream quantile providers never see endpoints.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

/// An n-by-d matrix of copula observations, each row a point in (0, 1)^d.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPanel {
    dim: usize,
    data: Vec<f64>,
}

impl UniformPanel {
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::dimension("panel dimension must be >= 1"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::dimension(format!(
                    "panel row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for &v in row {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::data(format!(
                        "panel entry {v} in row {i} outside the open unit interval"
                    )));
                }
                data.push(v);
            }
        }
        Ok(UniformPanel { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        assert!(j < self.dim, "column index out of range");
        self.data
            .iter()
            .skip(j)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// Write as CSV with header u1,...,ud and shortest-round-trip floats.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let header: Vec<String> = (1..=self.dim).map(|j| format!("u{j}")).collect();
        w.write_record(&header)
            .map_err(|e| Error::data(format!("csv write: {e}")))?;
        for row in self.rows() {
            let rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            w.write_record(&rec)
                .map_err(|e| Error::data(format!("csv write: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let dim = r
            .headers()
            .map_err(|e| Error::data(format!("csv header: {e}")))?
            .len();
        if dim == 0 {
            return Err(Error::data("panel csv has an empty header"));
        }
        let mut data = Vec::new();
        for (idx, rec) in r.records().enumerate() {
            let line = idx + 2; // header occupies line 1
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != dim {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {dim} fields, found {}", rec.len()),
                });
            }
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("'{field}' is not a number"),
                })?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::Parse {
                        line,
                        message: format!("panel entry {v} outside the open unit interval"),
                    });
                }
                data.push(v);
            }
        }
        if data.is_empty() {
            return Err(Error::data("panel csv contains no observations"));
        }
        Ok(UniformPanel { dim, data })
    }
}

/// Family-specific frailty law, prepared once per sampling run.
pub(crate) enum Frailty {
    /// V = 1 almost surely (independence, and boundary parameters that
    /// collapse to it).
    Degenerate,
    /// Clayton: Gamma(1/theta, 1).
    GammaLaw(Gamma<f64>),
    /// Gumbel: positive alpha-stable normalized to Laplace transform
    /// exp(-s^alpha).
    Stable { alpha: f64 },
    /// Frank: logarithmic series with p = 1 - e^{-theta}.
    LogSeries { theta: f64 },
    /// Joe: Sibuya(alpha) on the positive integers.
    Sibuya { alpha: f64, ln_gamma_1ma: f64 },
    /// AMH: geometric, P(V = k) = (1 - theta) theta^{k-1}.
    Geometric { ln_theta: f64 },
}

impl Frailty {
    pub(crate) fn for_spec(spec: &CopulaSpec) -> Result<Frailty> {
        let th = spec.theta();
        Ok(match spec.family() {
            Family::Independence => Frailty::Degenerate,
            Family::Clayton => Frailty::GammaLaw(
                Gamma::new(1.0 / th, 1.0)
                    .map_err(|e| Error::parameter(format!("gamma frailty: {e}")))?,
            ),
            Family::Gumbel => {
                if th == 1.0 {
                    Frailty::Degenerate
                } else {
                    Frailty::Stable { alpha: 1.0 / th }
                }
            }
            Family::Frank => Frailty::LogSeries { theta: th },
            Family::Joe => {
                if th == 1.0 {
                    Frailty::Degenerate
                } else {
                    let alpha = 1.0 / th;
                    Frailty::Sibuya {
                        alpha,
                        ln_gamma_1ma: ln_gamma(1.0 - alpha),
                    }
                }
            }
            Family::Amh => {
                if th == 0.0 {
                    Frailty::Degenerate
                } else {
                    Frailty::Geometric { ln_theta: th.ln() }
                }
            }
        })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Frailty::Degenerate => 1.0,
            Frailty::GammaLaw(g) => g.sample(rng),
            Frailty::Stable { alpha } => sample_positive_stable(*alpha, rng),
            Frailty::LogSeries { theta } => sample_log_series(*theta, rng),
            Frailty::Sibuya {
                alpha,
                ln_gamma_1ma,
            } => sample_sibuya(*alpha, *ln_gamma_1ma, rng),
            Frailty::Geometric { ln_theta } => {
                let u: f64 = rng.sample(Open01);
                (u.ln() / ln_theta).ceil().max(1.0)
            }
        }
    }
}

/// Kanter's representation of the positive stable law with Laplace
/// transform exp(-s^alpha), 0 < alpha < 1. Evaluated in the log domain so
/// alpha near either endpoint cannot overflow intermediate powers.
fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    let e: f64 = rng.sample(Exp1);
    let x = std::f64::consts::PI * u;
    let b = 1.0 - alpha;
    let ln_v =
        (b / alpha) * ((b * x).sin().ln() - e.ln()) + (alpha * x).sin().ln() - x.sin().ln() / alpha;
    ln_v.exp()
}

/// Kemp's two-uniform generator for the logarithmic-series law with
/// p = 1 - e^{-theta}: exact, O(1) per draw.
fn sample_log_series<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    let u1: f64 = rng.sample(Open01);
    let u2: f64 = rng.sample(Open01);
    let x = theta * u1;
    // ln(1 - e^{-x}) without cancellation on either side of ln 2
    let ln_w = if x > std::f64::consts::LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    };
    (1.0 + u2.ln() / ln_w).floor().max(1.0)
}

/// Sibuya(alpha) via inversion of the exact survival function
/// P(V > n) = 1 / (n B(n, 1 - alpha)), seeded by its n^{-alpha} asymptote.
fn sample_sibuya<R: Rng + ?Sized>(alpha: f64, ln_gamma_1ma: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    if u <= alpha {
        return 1.0;
    }
    let target = 1.0 - u;
    let ln_x = -(target.ln() + ln_gamma_1ma) / alpha;
    if ln_x > 36.5 {
        // beyond representable integers: the survival function is already
        // indistinguishable from its continuous asymptote
        return ln_x.exp();
    }
    let survival = |n: f64| (-(n.ln() + ln_beta(n, 1.0 - alpha))).exp();
    let mut n = ln_x.exp().floor().max(1.0);
    let mut guard = 0usize;
    while survival(n) > target && guard < 4096 {
        n += 1.0;
        guard += 1;
    }
    while n > 1.0 && survival(n - 1.0) <= target && guard < 8192 {
        n -= 1.0;
        guard += 1;
    }
    n
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// One frailty realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrailtyDraw {
    pub value: f64,
}

/// Draw a single frailty variate for the family/parameter of `spec`.
pub fn sample_frailty(spec: &CopulaSpec, seed: u64) -> Result<FrailtyDraw> {
    let frailty = Frailty::for_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, FRAILTY_TAG));
    Ok(FrailtyDraw {
        value: frailty.sample(&mut rng),
    })
}

/// Draw m frailty variates for the family/parameter of `spec`.
pub fn sample_frailties(spec: &CopulaSpec, m: usize, seed: u64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::parameter("frailty sample size must be >= 1"));
    }
    let frailty = Frailty::for_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, FRAILTY_TAG));
    Ok((0..m).map(|_| frailty.sample(&mut rng)).collect())
}

/// Draw an n-row panel from the copula. Rows are generated in parallel on
/// independent RNG streams keyed by row index, so results are reproducible
/// across thread counts.
pub fn sample_copula(spec: &CopulaSpec, n: usize, seed: u64) -> Result<UniformPanel> {
    if n == 0 {
        return Err(Error::parameter("panel sample size must be >= 1"));
    }
    let frailty = Frailty::for_spec(spec)?;
    let base = mix_seed(seed, PANEL_TAG);
    let d = spec.dim();
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(i as u64 + 1);
            let v = frailty.sample(&mut rng);
            let mut row = Vec::with_capacity(d);
            for _ in 0..d {
                let e: f64 = rng.sample(Exp1);
                row.push(spec.phi_inv(e / v)?.clamp(f64::MIN_POSITIVE, ONE_MINUS));
            }
            Ok(row)
        })
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for row in rows {
        data.extend_from_slice(&row?);
    }
    Ok(UniformPanel { dim: d, data })
}

/// Empirical VaR and CVaR of a sample: the inf-based beta-quantile (first
/// order statistic whose ECDF reaches beta) and the mean of observations
/// strictly above it.
pub fn empirical_var_cvar(values: &[f64], beta: f64) -> Result<(f64, f64)> {
    if values.is_empty() || !(0.0..1.0).contains(&beta) {
        return Err(Error::EmptyTail(beta));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data(
            "empirical tail statistics require finite values",
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = ((beta * n as f64).ceil() as usize).clamp(1, n);
    let var = sorted[k - 1];
    let first_above = sorted.partition_point(|&v| v <= var);
    if first_above == n {
        return Err(Error::EmptyTail(beta));
    }
    let cvar = crate::util::mean(&sorted[first_above..]);
    Ok((var, cvar))
}

/// Portfolio VaR/CVaR from a copula panel: maps each row through the
/// portfolio's weighted quantiles and takes empirical tail statistics of
/// the resulting losses.
pub fn portfolio_var_cvar(
    panel: &UniformPanel,
    port: &PortfolioSpec,
    beta: f64,
) -> Result<(f64, f64)> {
    if panel.dim() != port.dim() {
        return Err(Error::dimension(format!(
            "panel dimension {} does not match portfolio dimension {}",
            panel.dim(),
            port.dim()
        )));
    }
    let losses: Vec<f64> = (0..panel.n_rows())
        .into_par_iter()
        .map(|i| port.weighted_row(panel.row(i)))
        .collect::<Result<Vec<f64>>>()?;
    empirical_var_cvar(&losses, beta)
}
