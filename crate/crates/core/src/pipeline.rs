//! End-to-end risk pipeline: price ingestion, synthetic data generation,
//! margin and copula fitting, one-shot risk reports, rolling backtests,
//! parameter sweeps, and CSV emission.
//!
//! Returns are negative log-returns scaled by 100, so a loss of one
//! percent is the value +1.  All randomized stages derive their streams
//! from the configured seed, and parallel stages reduce in a fixed order,
//! so every artifact is reproducible bit for bit (timing columns aside).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::ccvar::ccvar_quadrature;
use crate::error::{Error, Result};
use crate::fit::{copula_loglik, fit_copula_mle, CopulaFit, FitMethod};
use crate::generators::{CopulaSpec, Family};
use crate::margins::{
    fit_ar_garch_with_start, pit_transform, Innovation, InnovationFamily, MarginFit, MarginModel,
    ReturnSeries,
};
use crate::portfolio::{PortfolioSpec, Quantile, UniformMargin};
use crate::quad::QuadConfig;
use crate::sampling::{portfolio_var_cvar, sample_copula, UniformPanel};
use crate::util::{excess_kurtosis, mean, mix_seed, skewness, variance};

/// Stream tags keeping the pipeline's random streams disjoint.
const RISK_TAG: u64 = 0x7269_736b;
const BACKTEST_TAG: u64 = 0x6261_636b;
const SYNTH_TAG: u64 = 0x7379_6e74;

fn stream_seed(seed: u64, tag: u64, k: u64) -> u64 {
    mix_seed(mix_seed(seed, tag), k)
}

/// Stable per-family stream key, independent of the order families are
/// processed in, so per-family Monte Carlo numbers survive reordering.
fn family_stream_key(family: Family) -> u64 {
    match family {
        Family::Independence => 0,
        Family::Clayton => 1,
        Family::Frank => 2,
        Family::Gumbel => 3,
        Family::Joe => 4,
        Family::Amh => 5,
    }
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// Either one copula family or the whole parametric roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    All,
    One(Family),
}

impl FamilyChoice {
    pub fn families(&self) -> Vec<Family> {
        match self {
            FamilyChoice::All => Family::PARAMETRIC.to_vec(),
            FamilyChoice::One(f) => vec![*f],
        }
    }
}

impl std::fmt::Display for FamilyChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FamilyChoice::All => f.write_str("all"),
            FamilyChoice::One(fam) => f.write_str(fam.name()),
        }
    }
}

impl std::str::FromStr for FamilyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            Ok(FamilyChoice::All)
        } else {
            Ok(FamilyChoice::One(s.trim().parse()?))
        }
    }
}

/// Every knob of the pipeline, file-loadable as flat `key value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<String>,
    /// Subset of symbol columns to use; empty means all columns.
    pub columns: Vec<String>,
    pub innovation: InnovationFamily,
    pub family: FamilyChoice,
    pub betas: Vec<f64>,
    /// Portfolio weights; empty means equal weights.
    pub weights: Vec<f64>,
    /// Rolling window length for backtests.
    pub window: usize,
    /// Monte-Carlo panel size for VaR/CVaR.
    pub mc_samples: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let quad = QuadConfig::default();
        PipelineConfig {
            input: None,
            columns: Vec::new(),
            innovation: InnovationFamily::StudentT,
            family: FamilyChoice::All,
            betas: vec![0.95, 0.99],
            weights: Vec::new(),
            window: 1000,
            mc_samples: 20_000,
            abs_tol: quad.abs_tol,
            rel_tol: quad.rel_tol,
            seed: 1,
            out_dir: "out".to_string(),
        }
    }
}

fn parse_f64_list(value: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::parameter("list value must not be empty"));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::parameter(format!("bad number '{s}': {e}")))
        })
        .collect()
}

impl PipelineConfig {
    /// Applies one `key value` setting; used both by the config-file parser
    /// and by command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "input" => self.input = Some(value.to_string()),
            "columns" => {
                self.columns = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                if self.columns.is_empty() {
                    return Err(Error::parameter("columns list must not be empty"));
                }
            }
            "innovation" => self.innovation = value.parse()?,
            "family" => self.family = value.parse()?,
            "beta" => self.betas = validate_betas(&parse_f64_list(value)?)?,
            "weights" => self.weights = parse_f64_list(value)?,
            "window" => {
                self.window = value
                    .parse()
                    .map_err(|e| Error::parameter(format!("bad window '{value}': {e}")))?
            }
            "mc_samples" => {
                self.mc_samples = value
                    .parse()
                    .map_err(|e| Error::parameter(format!("bad mc_samples '{value}': {e}")))?
            }
            "abs_tol" | "rel_tol" => {
                let tol: f64 = value
                    .parse()
                    .map_err(|e| Error::parameter(format!("bad {key} '{value}': {e}")))?;
                if !(tol > 0.0 && tol.is_finite()) {
                    return Err(Error::parameter(format!(
                        "{key} must be positive, got {tol}"
                    )));
                }
                if key == "abs_tol" {
                    self.abs_tol = tol;
                } else {
                    self.rel_tol = tol;
                }
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|e| Error::parameter(format!("bad seed '{value}': {e}")))?
            }
            "out_dir" => self.out_dir = value.to_string(),
            other => return Err(Error::parameter(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a config file: one `key value` per line, `#` comments and
    /// blank lines ignored, unset keys keep their defaults.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(char::is_whitespace).ok_or(Error::Parse {
                line: idx + 1,
                message: format!("expected 'key value', got '{line}'"),
            })?;
            cfg.set(key, value).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        if let Some(input) = &self.input {
            out.push_str(&format!("input {input}\n"));
        }
        if !self.columns.is_empty() {
            out.push_str(&format!("columns {}\n", self.columns.join(",")));
        }
        out.push_str(&format!("innovation {}\n", self.innovation));
        out.push_str(&format!("family {}\n", self.family));
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        out.push_str(&format!("beta {}\n", join(&self.betas)));
        if !self.weights.is_empty() {
            out.push_str(&format!("weights {}\n", join(&self.weights)));
        }
        out.push_str(&format!("window {}\n", self.window));
        out.push_str(&format!("mc_samples {}\n", self.mc_samples));
        out.push_str(&format!("abs_tol {:?}\n", self.abs_tol));
        out.push_str(&format!("rel_tol {:?}\n", self.rel_tol));
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("out_dir {}\n", self.out_dir));
        out
    }

    pub fn quad_config(&self) -> QuadConfig {
        QuadConfig {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            ..QuadConfig::default()
        }
    }

    /// Concrete weight vector for `dim` assets: configured weights
    /// validated and normalized to sum one, or equal weights when unset.
    pub fn resolved_weights(&self, dim: usize) -> Result<Vec<f64>> {
        if self.weights.is_empty() {
            return Ok(vec![1.0 / dim as f64; dim]);
        }
        if self.weights.len() != dim {
            return Err(Error::dimension(format!(
                "{} weights configured for {dim} assets",
                self.weights.len()
            )));
        }
        let mut total = 0.0;
        for &w in &self.weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::parameter(format!(
                    "portfolio weights must be nonnegative, got {w}"
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::parameter("portfolio weights must not all be zero"));
        }
        Ok(self.weights.iter().map(|w| w / total).collect())
    }
}

/// Risk levels must be a nonempty list inside the open unit interval.
pub fn validate_betas(betas: &[f64]) -> Result<Vec<f64>> {
    if betas.is_empty() {
        return Err(Error::parameter("beta list must not be empty"));
    }
    for &b in betas {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::parameter(format!("beta must lie in (0,1), got {b}")));
        }
    }
    Ok(betas.to_vec())
}

// ---------------------------------------------------------------------------
// calendar helpers (proleptic Gregorian, days since 1970-01-01)
// ---------------------------------------------------------------------------

fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mm = m as u64;
    let doy = (153 * (if mm > 2 { mm - 3 } else { mm + 9 }) + 2) / 5 + d as u64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe as i64 - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn format_date(days: i64) -> String {
    let (y, m, d) = civil_from_days(days);
    format!("{y:04}-{m:02}-{d:02}")
}

fn validate_iso_date(s: &str, line: usize) -> Result<()> {
    let b = s.as_bytes();
    let bad = |msg: &str| Error::Parse {
        line,
        message: format!("{msg}: '{s}'"),
    };
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return Err(bad("expected ISO date YYYY-MM-DD"));
    }
    for &i in &[0usize, 1, 2, 3, 5, 6, 8, 9] {
        if !b[i].is_ascii_digit() {
            return Err(bad("expected ISO date YYYY-MM-DD"));
        }
    }
    let month: u32 = s[5..7].parse().unwrap();
    let day: u32 = s[8..10].parse().unwrap();
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(bad("calendar field out of range"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ingestion
// ---------------------------------------------------------------------------

/// Ingested return panel: per-asset negative log-returns scaled by 100,
/// aligned on the dates where every selected price is present.
#[derive(Debug, Clone)]
pub struct Ingest {
    pub names: Vec<String>,
    /// Date of each return row (the later of the two price dates).
    pub dates: Vec<String>,
    pub returns: Vec<ReturnSeries>,
    /// Price rows dropped because a selected price was missing.
    pub dropped_rows: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("csv: {e}"))
}

fn is_missing(field: &str) -> bool {
    field.is_empty()
        || field.eq_ignore_ascii_case("na")
        || field.eq_ignore_ascii_case("nan")
        || field.eq_ignore_ascii_case("null")
}

/// Reads a `date,SYM1,…,SYMd` price CSV (ISO dates, strictly ascending,
/// strictly positive prices) and computes r_t = -100 ln(P_t / P_{t-1})
/// per asset.  Rows with any missing selected price are dropped and
/// counted; returns then span the gap.
pub fn ingest(path: &Path, columns: &[String]) -> Result<Ingest> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::data("first CSV column must be 'date'"));
    }
    let all: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let (names, indices): (Vec<String>, Vec<usize>) = if columns.is_empty() {
        (all.clone(), (1..headers.len()).collect())
    } else {
        let mut idx = Vec::with_capacity(columns.len());
        for want in columns {
            let pos = all.iter().position(|h| h == want).ok_or_else(|| {
                Error::data(format!("column '{want}' not present in the price file"))
            })?;
            idx.push(pos + 1);
        }
        (columns.to_vec(), idx)
    };
    if names.is_empty() {
        return Err(Error::data("price file has no symbol columns"));
    }

    let mut dates: Vec<String> = Vec::new();
    let mut prices: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;
    let mut last_date: Option<String> = None;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        let date = record[0].to_string();
        validate_iso_date(&date, line)?;
        if let Some(prev) = &last_date {
            if date.as_str() <= prev.as_str() {
                return Err(Error::Parse {
                    line,
                    message: format!("dates must be strictly ascending ('{prev}' then '{date}')"),
                });
            }
        }
        last_date = Some(date.clone());

        let mut row = Vec::with_capacity(indices.len());
        let mut missing = false;
        for &j in &indices {
            let field = &record[j];
            if is_missing(field) {
                missing = true;
                break;
            }
            let price: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse price '{field}' in column '{}'", &headers[j]),
            })?;
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::domain(format!(
                    "non-positive price {price} in column '{}' at line {line}",
                    &headers[j]
                )));
            }
            row.push(price);
        }
        if missing {
            dropped += 1;
            continue;
        }
        dates.push(date);
        prices.push(row);
    }

    if prices.len() < 2 {
        return Err(Error::data(
            "need at least two complete price rows to form returns",
        ));
    }
    let returns = (0..names.len())
        .map(|j| {
            let values = (1..prices.len())
                .map(|t| -100.0 * (prices[t][j] / prices[t - 1][j]).ln())
                .collect();
            ReturnSeries::new(values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ingest {
        names,
        dates: dates[1..].to_vec(),
        returns,
        dropped_rows: dropped,
    })
}

/// Descriptive statistics of one return series in report column order.
#[derive(Debug, Clone)]
pub struct AssetStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// Raw (non-excess) sample kurtosis.
    pub kurtosis: f64,
    pub skewness: f64,
}

pub fn descriptive_stats(name: &str, series: &ReturnSeries) -> AssetStats {
    let values = series.values();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("return values are finite"));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    AssetStats {
        name: name.to_string(),
        mean: mean(values),
        std: variance(values).sqrt(),
        min: sorted[0],
        median,
        max: sorted[n - 1],
        kurtosis: excess_kurtosis(values) + 3.0,
        skewness: skewness(values),
    }
}

pub fn write_stats_csv(stats: &[AssetStats], path: &Path) -> Result<()> {
    let mut out = String::from("asset,mean,std,min,median,max,kurtosis,skewness\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.name, s.mean, s.std, s.min, s.median, s.max, s.kurtosis, s.skewness
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_returns_csv(ingest: &Ingest, path: &Path) -> Result<()> {
    let mut out = String::from("date");
    for name in &ingest.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, date) in ingest.dates.iter().enumerate() {
        out.push_str(date);
        for series in &ingest.returns {
            out.push_str(&format!(",{}", series.values()[t]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

/// A deterministic roster of stationary margin models with mildly varied
/// coefficients, scaled so unconditional return standard deviations land
/// near 2 (matching the magnitude of daily equity moves times 100).
pub fn synthetic_margin_models(dim: usize, family: InnovationFamily) -> Result<Vec<MarginModel>> {
    (0..dim)
        .map(|j| {
            let jf = j as f64;
            let innovation = match family {
                InnovationFamily::Normal => Innovation::Normal,
                InnovationFamily::StudentT => Innovation::StudentT { nu: 5.0 + jf },
                InnovationFamily::SkewedT => Innovation::SkewedT {
                    nu: 5.0 + jf,
                    zeta: 1.05 + 0.01 * jf,
                },
            };
            MarginModel::new(
                0.02 + 0.005 * jf,
                0.05 + 0.01 * jf,
                0.2 + 0.05 * jf,
                0.05 + 0.005 * jf,
                0.90 - 0.015 * jf,
                innovation,
            )
        })
        .collect()
}

/// Draws a dependent uniform panel from the copula and pushes each column
/// through its margin's AR-GARCH recursion (variance started at its
/// stationary level).
pub fn generate_synthetic_returns(
    spec: &CopulaSpec,
    models: &[MarginModel],
    n: usize,
    seed: u64,
) -> Result<Vec<ReturnSeries>> {
    if models.len() != spec.dim() {
        return Err(Error::dimension(format!(
            "{} margin models for a {}-dimensional copula",
            models.len(),
            spec.dim()
        )));
    }
    let panel = sample_copula(spec, n, mix_seed(seed, SYNTH_TAG))?;
    models
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            let u = panel.column(j);
            let mut x = Vec::with_capacity(n);
            let mut prev_x = m.a0() / (1.0 - m.a1());
            let mut prev_eps = 0.0;
            let mut var = m.unconditional_variance();
            for (t, &p) in u.iter().enumerate() {
                if t > 0 {
                    var = m.c0() + m.c1() * prev_eps * prev_eps + m.d1() * var;
                }
                let eps = m.innovation().quantile(p)? * var.sqrt();
                let xt = m.a0() + m.a1() * prev_x + eps;
                x.push(xt);
                prev_x = xt;
                prev_eps = eps;
            }
            ReturnSeries::new(x)
        })
        .collect()
}

/// Converts return series back to price paths started at 100, inverting
/// the ingestion formula.
pub fn returns_to_prices(returns: &[ReturnSeries]) -> Vec<Vec<f64>> {
    let n = returns.first().map_or(0, |r| r.len());
    let mut rows = Vec::with_capacity(n + 1);
    rows.push(vec![100.0; returns.len()]);
    for t in 0..n {
        let prev = &rows[t];
        let row = returns
            .iter()
            .zip(prev)
            .map(|(r, p)| p * (-r.values()[t] / 100.0).exp())
            .collect();
        rows.push(row);
    }
    rows
}

/// Consecutive synthetic ISO dates starting at 2015-01-01.
pub fn synthetic_dates(n: usize) -> Vec<String> {
    let base = days_from_civil(2015, 1, 1);
    (0..n).map(|t| format_date(base + t as i64)).collect()
}

pub fn write_prices_csv(
    names: &[String],
    dates: &[String],
    rows: &[Vec<f64>],
    path: &Path,
) -> Result<()> {
    if dates.len() != rows.len() {
        return Err(Error::dimension(format!(
            "{} dates for {} price rows",
            dates.len(),
            rows.len()
        )));
    }
    let mut out = String::from("date");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (date, row) in dates.iter().zip(rows) {
        out.push_str(date);
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fitting stages
// ---------------------------------------------------------------------------

/// Fits one AR-GARCH margin per asset, in parallel with stable ordering.
pub fn fit_margins(
    returns: &[ReturnSeries],
    family: InnovationFamily,
    warm: Option<&[MarginModel]>,
) -> Result<Vec<MarginFit>> {
    if returns.is_empty() {
        return Err(Error::dimension("need at least one return series"));
    }
    if let Some(w) = warm {
        if w.len() != returns.len() {
            return Err(Error::dimension(format!(
                "{} warm starts for {} assets",
                w.len(),
                returns.len()
            )));
        }
    }
    let fits: Vec<Result<MarginFit>> = returns
        .par_iter()
        .enumerate()
        .map(|(i, series)| {
            fit_ar_garch_with_start(series, family, warm.map(|w| &w[i]))
                .map_err(|e| Error::data(format!("margin fit for asset {i} failed: {e}")))
        })
        .collect();
    fits.into_iter().collect()
}

/// Probability-integral transform of every asset through its fitted
/// margin, assembled into a uniform panel (rows = time).
pub fn pit_panel(models: &[MarginModel], returns: &[ReturnSeries]) -> Result<UniformPanel> {
    if models.is_empty() || models.len() != returns.len() {
        return Err(Error::dimension(format!(
            "{} models for {} return series",
            models.len(),
            returns.len()
        )));
    }
    let cols: Vec<Vec<f64>> = models
        .iter()
        .zip(returns)
        .map(|(m, s)| pit_transform(m, s))
        .collect::<Result<_>>()?;
    let t = cols[0].len();
    if cols.iter().any(|c| c.len() != t) {
        return Err(Error::dimension("return series have unequal lengths"));
    }
    let rows: Vec<Vec<f64>> = (0..t)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    UniformPanel::from_rows(models.len(), &rows)
}

/// One-step-ahead return quantile under a fitted margin model.
struct ForecastMargin {
    model: MarginModel,
}

impl Quantile for ForecastMargin {
    fn quantile(&self, p: f64) -> Result<f64> {
        self.model.quantile_forecast(p)
    }
}

/// Portfolio whose marginal quantiles are the one-step-ahead forecasts of
/// the fitted margin models.
pub fn forecast_portfolio(weights: &[f64], models: &[MarginModel]) -> Result<PortfolioSpec> {
    if weights.len() != models.len() {
        return Err(Error::dimension(format!(
            "{} weights for {} margin models",
            weights.len(),
            models.len()
        )));
    }
    PortfolioSpec::new(
        weights.to_vec(),
        models
            .iter()
            .map(|m| Box::new(ForecastMargin { model: *m }) as Box<dyn Quantile>)
            .collect(),
    )
}

/// Fits the copula parameter, or fixes the parameter-free independence
/// copula with its exact log-likelihood (zero).
fn fit_or_fix_copula(panel: &UniformPanel, family: Family) -> Result<CopulaFit> {
    if family == Family::Independence {
        let spec = CopulaSpec::independence(panel.dim())?;
        let loglik = copula_loglik(panel, &spec)?;
        return Ok(CopulaFit {
            spec,
            stderr: f64::NAN,
            loglik,
            method: FitMethod::Pml,
            boundary: false,
        });
    }
    fit_copula_mle(panel, family)
}

// ---------------------------------------------------------------------------
// risk reports
// ---------------------------------------------------------------------------

/// One report cell: a (copula, margin, beta) row of the risk table.
#[derive(Debug, Clone)]
pub struct RiskRow {
    pub copula: String,
    pub margin: String,
    pub beta: f64,
    pub var: f64,
    pub cvar: f64,
    pub ccvar: f64,
    pub method: String,
    /// Standard error of the copula parameter estimate.
    pub stderr: f64,
    pub runtime_ms: f64,
}

/// Report rows plus the cells that failed (identified, never fatal).
#[derive(Debug, Clone, Default)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    pub failures: Vec<String>,
}

impl RiskReport {
    fn measure_range<F: Fn(&RiskRow) -> f64>(&self, beta: f64, f: F) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.beta == beta)
            .map(&f)
            .collect();
        if values.len() < 2 {
            return None;
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(hi - lo)
    }

    /// Spread of CVaR across copula families at one risk level.
    pub fn cvar_range(&self, beta: f64) -> Option<f64> {
        self.measure_range(beta, |r| r.cvar)
    }

    /// Spread of CCVaR across copula families at one risk level.
    pub fn ccvar_range(&self, beta: f64) -> Option<f64> {
        self.measure_range(beta, |r| r.ccvar)
    }
}

/// Computes the report rows from already-fitted models: CCVaR by
/// quadrature against one-step-ahead margin quantiles, VaR/CVaR from a
/// Monte-Carlo panel of the fitted copula pushed through the same
/// quantiles.  Failing cells are recorded and skipped.
#[allow(clippy::too_many_arguments)]
pub fn risk_rows_from_models(
    models: &[MarginModel],
    copulas: &[CopulaFit],
    margin_label: &str,
    betas: &[f64],
    weights: &[f64],
    mc_samples: usize,
    seed: u64,
    quad: &QuadConfig,
) -> RiskReport {
    let mut report = RiskReport::default();
    let port = match forecast_portfolio(weights, models) {
        Ok(p) => p,
        Err(e) => {
            report.failures.push(format!("portfolio: {e}"));
            return report;
        }
    };
    for copfit in copulas {
        let family = copfit.spec.family();
        let label = family.name();
        if copfit.spec.dim() != models.len() {
            report.failures.push(format!(
                "copula {label}: dimension {} does not match {} margins",
                copfit.spec.dim(),
                models.len()
            ));
            continue;
        }
        let mc_seed = stream_seed(seed, RISK_TAG, family_stream_key(family));
        let mc = match sample_copula(&copfit.spec, mc_samples, mc_seed) {
            Ok(panel) => panel,
            Err(e) => {
                report
                    .failures
                    .push(format!("copula {label}: sampling failed: {e}"));
                continue;
            }
        };
        let method = if copfit.boundary {
            format!("{}+quadrature+boundary", copfit.method)
        } else {
            format!("{}+quadrature", copfit.method)
        };
        for &beta in betas {
            let start = Instant::now();
            let cell = portfolio_var_cvar(&mc, &port, beta).and_then(|(var, cvar)| {
                let ccvar = ccvar_quadrature(&copfit.spec, &port, beta, quad)?.value;
                Ok((var, cvar, ccvar))
            });
            match cell {
                Ok((var, cvar, ccvar)) => report.rows.push(RiskRow {
                    copula: label.to_string(),
                    margin: margin_label.to_string(),
                    beta,
                    var,
                    cvar,
                    ccvar,
                    method: method.clone(),
                    stderr: copfit.stderr,
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                }),
                Err(e) => report
                    .failures
                    .push(format!("copula {label} beta {beta}: {e}")),
            }
        }
    }
    report
}

/// Everything the one-shot risk command produces: the report plus the
/// fitted models it came from (for serialization and resumed runs).
#[derive(Debug, Clone)]
pub struct RiskOutcome {
    pub report: RiskReport,
    pub margin_fits: Vec<MarginFit>,
    pub copula_fits: Vec<CopulaFit>,
}

/// Full inference-functions-for-margins pass over a return panel: fit
/// margins, transform to uniforms, fit each requested copula family, and
/// price the risk measures.
pub fn risk_once(
    names: &[String],
    returns: &[ReturnSeries],
    cfg: &PipelineConfig,
) -> Result<RiskOutcome> {
    if names.len() != returns.len() {
        return Err(Error::dimension(format!(
            "{} names for {} return series",
            names.len(),
            returns.len()
        )));
    }
    if returns.len() < 2 {
        return Err(Error::dimension(
            "the risk pipeline needs at least 2 assets",
        ));
    }
    let betas = validate_betas(&cfg.betas)?;
    let weights = cfg.resolved_weights(returns.len())?;

    let margin_fits = fit_margins(returns, cfg.innovation, None)?;
    let models: Vec<MarginModel> = margin_fits.iter().map(|f| f.model).collect();
    let panel = pit_panel(&models, returns)?;

    let mut copula_fits = Vec::new();
    let mut failures = Vec::new();
    for family in cfg.family.families() {
        match fit_or_fix_copula(&panel, family) {
            Ok(fit) => copula_fits.push(fit.with_method(FitMethod::Ifm)),
            Err(e) => failures.push(format!("copula {family}: fit failed: {e}")),
        }
    }

    let mut report = risk_rows_from_models(
        &models,
        &copula_fits,
        cfg.innovation.name(),
        &betas,
        &weights,
        cfg.mc_samples,
        cfg.seed,
        &cfg.quad_config(),
    );
    failures.append(&mut report.failures);
    report.failures = failures;
    Ok(RiskOutcome {
        report,
        margin_fits,
        copula_fits,
    })
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------

/// One forecast row of a rolling backtest.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRow {
    pub window: usize,
    /// Date of the forecast target (its row index when no dates are known).
    pub date: String,
    pub beta: f64,
    pub var: f64,
    pub cvar: f64,
    pub ccvar: f64,
    /// Realized portfolio return on the forecast date.
    pub realized: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BacktestOutcome {
    pub rows: Vec<BacktestRow>,
    pub failures: Vec<String>,
}

/// Rolling one-step-ahead backtest with step 1: refit margins and copula
/// on each window and forecast the next day's VaR/CVaR/CCVaR.
///
/// The first window is fitted cold and its margin estimates warm-start
/// every other window, which keeps the loop embarrassingly parallel
/// while still avoiding repeated cold starts; windows are emitted in
/// index order and window failures are logged, not fatal.
pub fn backtest(
    names: &[String],
    returns: &[ReturnSeries],
    dates: &[String],
    cfg: &PipelineConfig,
) -> Result<BacktestOutcome> {
    let family = match cfg.family {
        FamilyChoice::One(f) => f,
        FamilyChoice::All => {
            return Err(Error::parameter(
                "backtest needs a single copula family, not 'all'",
            ))
        }
    };
    if names.len() != returns.len() || returns.len() < 2 {
        return Err(Error::dimension(format!(
            "backtest needs >= 2 named return series, got {} names and {} series",
            names.len(),
            returns.len()
        )));
    }
    let t_len = returns[0].len();
    if returns.iter().any(|r| r.len() != t_len) {
        return Err(Error::dimension("return series have unequal lengths"));
    }
    if !dates.is_empty() && dates.len() != t_len {
        return Err(Error::dimension(format!(
            "{} dates for {t_len} return rows",
            dates.len()
        )));
    }
    let betas = validate_betas(&cfg.betas)?;
    let weights = cfg.resolved_weights(returns.len())?;
    let window = cfg.window;
    if window >= t_len {
        return Err(Error::data(format!(
            "window {window} must be shorter than the series length {t_len}"
        )));
    }
    let n_windows = t_len - window;
    let quad = cfg.quad_config();

    let window_series = |w: usize| -> Result<Vec<ReturnSeries>> {
        returns
            .iter()
            .map(|r| ReturnSeries::new(r.values()[w..w + window].to_vec()))
            .collect()
    };

    // cold fit on the first window; its estimates warm-start all windows
    let first_fits: Option<Vec<MarginFit>> = window_series(0)
        .and_then(|s| fit_margins(&s, cfg.innovation, None))
        .ok();
    let warm_models: Option<Vec<MarginModel>> = first_fits
        .as_ref()
        .map(|fits| fits.iter().map(|f| f.model).collect());

    let per_window: Vec<(usize, Result<Vec<BacktestRow>>)> = (0..n_windows)
        .into_par_iter()
        .map(|w| {
            let result = (|| -> Result<Vec<BacktestRow>> {
                let series = window_series(w)?;
                let fits = match (w, &first_fits) {
                    (0, Some(f)) => f.clone(),
                    _ => fit_margins(&series, cfg.innovation, warm_models.as_deref())?,
                };
                let models: Vec<MarginModel> = fits.iter().map(|f| f.model).collect();
                let panel = pit_panel(&models, &series)?;
                let copfit = fit_or_fix_copula(&panel, family)?.with_method(FitMethod::Ifm);
                let port = forecast_portfolio(&weights, &models)?;
                let mc = sample_copula(
                    &copfit.spec,
                    cfg.mc_samples,
                    stream_seed(cfg.seed, BACKTEST_TAG, w as u64),
                )?;
                let target = w + window;
                let realized: f64 = weights
                    .iter()
                    .zip(returns)
                    .map(|(lambda, r)| lambda * r.values()[target])
                    .sum();
                let date = if dates.is_empty() {
                    target.to_string()
                } else {
                    dates[target].clone()
                };
                let mut rows = Vec::with_capacity(betas.len());
                for &beta in &betas {
                    let (var, cvar) = portfolio_var_cvar(&mc, &port, beta)?;
                    let ccvar = ccvar_quadrature(&copfit.spec, &port, beta, &quad)?.value;
                    rows.push(BacktestRow {
                        window: w,
                        date: date.clone(),
                        beta,
                        var,
                        cvar,
                        ccvar,
                        realized,
                    });
                }
                Ok(rows)
            })();
            (w, result)
        })
        .collect();

    let mut outcome = BacktestOutcome::default();
    for (w, result) in per_window {
        match result {
            Ok(mut rows) => outcome.rows.append(&mut rows),
            Err(e) => outcome.failures.push(format!("window {w}: {e}")),
        }
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

/// One point of a CCVaR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub family: Family,
    pub theta: f64,
    pub beta: f64,
    pub ccvar: f64,
}

/// CCVaR over a beta grid for equal-weight standard-uniform portfolios of
/// dimension `dim`, one curve per (family, theta) pair.
pub fn sweep_beta_grid(
    dim: usize,
    betas: &[f64],
    specs: &[(Family, f64)],
    quad: &QuadConfig,
) -> Result<Vec<SweepPoint>> {
    let betas = validate_betas(betas)?;
    let port = PortfolioSpec::uniform(dim)?;
    let jobs: Vec<(Family, f64, f64)> = specs
        .iter()
        .flat_map(|&(f, th)| betas.iter().map(move |&b| (f, th, b)))
        .collect();
    jobs.par_iter()
        .map(|&(family, theta, beta)| {
            let spec = CopulaSpec::new(family, theta, dim)?;
            let value = ccvar_quadrature(&spec, &port, beta, quad)?.value;
            Ok(SweepPoint {
                family,
                theta,
                beta,
                ccvar: value,
            })
        })
        .collect()
}

/// CCVaR over a theta grid at fixed beta for standard-uniform margins
/// with the given weights.
pub fn sweep_theta_grid(
    family: Family,
    thetas: &[f64],
    beta: f64,
    weights: &[f64],
    quad: &QuadConfig,
) -> Result<Vec<SweepPoint>> {
    let port = PortfolioSpec::new(
        weights.to_vec(),
        weights
            .iter()
            .map(|_| Box::new(UniformMargin) as Box<dyn Quantile>)
            .collect(),
    )?;
    thetas
        .par_iter()
        .map(|&theta| {
            let spec = CopulaSpec::new(family, theta, weights.len())?;
            let value = ccvar_quadrature(&spec, &port, beta, quad)?.value;
            Ok(SweepPoint {
                family,
                theta,
                beta,
                ccvar: value,
            })
        })
        .collect()
}

/// Representative dependence levels per family for the beta sweep.
pub fn default_beta_sweep_specs() -> Vec<(Family, f64)> {
    vec![
        (Family::Independence, 0.0),
        (Family::Clayton, 0.5),
        (Family::Clayton, 2.0),
        (Family::Clayton, 8.0),
        (Family::Frank, 1.0),
        (Family::Frank, 5.0),
        (Family::Frank, 20.0),
        (Family::Gumbel, 1.25),
        (Family::Gumbel, 2.0),
        (Family::Gumbel, 5.0),
        (Family::Joe, 1.5),
        (Family::Joe, 3.0),
        (Family::Joe, 8.0),
        (Family::Amh, 0.2),
        (Family::Amh, 0.5),
        (Family::Amh, 0.9),
    ]
}

/// Beta grid 0.50, 0.51, …, 0.99.
pub fn default_beta_grid() -> Vec<f64> {
    (50..=99).map(|k| k as f64 / 100.0).collect()
}

/// Theta grid for a single-family sweep at fixed beta.
pub fn default_theta_grid(family: Family) -> Vec<f64> {
    match family {
        Family::Amh => (0..=99).map(|k| k as f64 / 100.0).collect(),
        Family::Gumbel | Family::Joe => (0..=200).map(|k| 1.0 + 0.02 * k as f64).collect(),
        Family::Clayton | Family::Frank => (1..=200).map(|k| 0.05 * k as f64).collect(),
        Family::Independence => vec![0.0],
    }
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

pub fn write_report_csv(report: &RiskReport, path: &Path) -> Result<()> {
    let mut out = String::from(
        "# losses are negative log-returns scaled by 100\n\
         copula,margin,beta,var,cvar,ccvar,method,stderr,runtime_ms\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.3}\n",
            r.copula, r.margin, r.beta, r.var, r.cvar, r.ccvar, r.method, r.stderr, r.runtime_ms
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Cross-family spread of CVaR and CCVaR per risk level.
pub fn write_ranges_csv(report: &RiskReport, betas: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("beta,cvar_range,ccvar_range\n");
    for &beta in betas {
        if let (Some(cv), Some(cc)) = (report.cvar_range(beta), report.ccvar_range(beta)) {
            out.push_str(&format!("{beta},{cv},{cc}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_backtest_csv(rows: &[BacktestRow], path: &Path) -> Result<()> {
    let mut out = String::from("window,date,beta,var,cvar,ccvar,realized\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.window, r.date, r.beta, r.var, r.cvar, r.ccvar, r.realized
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut out = String::from("family,theta,beta,ccvar\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.family, p.theta, p.beta, p.ccvar
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Long-format margin estimates: one row per (asset, parameter).
pub fn write_margin_fits_csv(names: &[String], fits: &[MarginFit], path: &Path) -> Result<()> {
    let mut out = String::from("asset,parameter,estimate,stderr\n");
    for (name, fit) in names.iter().zip(fits) {
        for ((param, value), se) in fit.param_names().iter().zip(fit.params()).zip(&fit.stderr) {
            out.push_str(&format!("{name},{param},{value},{se}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One row per fitted copula; `tail_distance` may be NaN when skipped.
pub fn write_copula_fits_csv(fits: &[CopulaFit], tail_distance: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("family,theta,stderr,loglik,method,boundary,tail_distance\n");
    for (fit, d) in fits.iter().zip(tail_distance) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fit.spec.family(),
            fit.spec.theta(),
            fit.stderr,
            fit.loglik,
            fit.method,
            fit.boundary,
            d
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// model persistence
// ---------------------------------------------------------------------------

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Saves fitted margins and copulas as flat key-value files in `dir`,
/// index-prefixed so [`load_models`] restores the original ordering.
pub fn save_models(
    dir: &Path,
    names: &[String],
    margins: &[MarginFit],
    copulas: &[CopulaFit],
) -> Result<()> {
    if names.len() != margins.len() {
        return Err(Error::dimension(format!(
            "{} names for {} margin fits",
            names.len(),
            margins.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    for (i, (name, fit)) in names.iter().zip(margins).enumerate() {
        let file = dir.join(format!("margin_{i:02}_{}.txt", sanitize(name)));
        std::fs::write(file, fit.to_key_value())?;
    }
    for (i, fit) in copulas.iter().enumerate() {
        let file = dir.join(format!("copula_{i:02}_{}.txt", fit.spec.family().name()));
        std::fs::write(file, fit.to_key_value())?;
    }
    Ok(())
}

/// Loads the artifacts written by [`save_models`]; asset names come back
/// sanitized.
pub fn load_models(dir: &Path) -> Result<(Vec<String>, Vec<MarginFit>, Vec<CopulaFit>)> {
    let mut margin_files: Vec<(String, PathBuf)> = Vec::new();
    let mut copula_files: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let fname = entry.file_name().to_string_lossy().into_owned();
        if fname.starts_with("margin_") && fname.ends_with(".txt") {
            margin_files.push((fname, entry.path()));
        } else if fname.starts_with("copula_") && fname.ends_with(".txt") {
            copula_files.push((fname, entry.path()));
        }
    }
    margin_files.sort();
    copula_files.sort();
    if margin_files.is_empty() {
        return Err(Error::data(format!(
            "no margin_*.txt files found in {}",
            dir.display()
        )));
    }

    let mut names = Vec::new();
    let mut margins = Vec::new();
    for (fname, path) in &margin_files {
        let stem = fname.trim_start_matches("margin_").trim_end_matches(".txt");
        let name = stem.split_once('_').map(|(_, n)| n).unwrap_or(stem);
        names.push(name.to_string());
        margins.push(MarginFit::from_key_value(&std::fs::read_to_string(path)?)?);
    }
    let mut copulas = Vec::new();
    for (_, path) in &copula_files {
        copulas.push(CopulaFit::from_key_value(&std::fs::read_to_string(path)?)?);
    }
    Ok((names, margins, copulas))
}
