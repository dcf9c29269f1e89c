//! `ccvar` — copula-based conditional value-at-risk for multi-asset
//! return panels.
//!
//! The subcommands mirror the pipeline stages: `ingest` turns prices into
//! returns, `fit-margins` and `fit-copula` estimate the model pieces,
//! `risk` produces a one-shot report, `backtest` rolls the whole fit
//! through time, `sweep` emits plot-ready CCVaR curves, and `sample`
//! generates a synthetic price panel to drive everything without market
//! data.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccvar_core::fit::{fit_copula_mle, gof_tail_distance, pseudo_observations, CopulaFit};
use ccvar_core::generators::{CopulaSpec, Family};
use ccvar_core::margins::MarginModel;
use ccvar_core::pipeline::{
    backtest, default_beta_grid, default_beta_sweep_specs, default_theta_grid, descriptive_stats,
    fit_margins, generate_synthetic_returns, ingest, load_models, returns_to_prices, risk_once,
    risk_rows_from_models, save_models, sweep_beta_grid, sweep_theta_grid, synthetic_dates,
    synthetic_margin_models, validate_betas, write_backtest_csv, write_copula_fits_csv,
    write_margin_fits_csv, write_prices_csv, write_ranges_csv, write_report_csv, write_returns_csv,
    write_stats_csv, write_sweep_csv, FamilyChoice, Ingest, PipelineConfig, RiskReport,
};
use ccvar_core::sampling::sample_copula;

#[derive(Parser)]
#[command(
    name = "ccvar",
    version,
    about = "Copula-based conditional value-at-risk for multi-asset return panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the same key in the
/// config file when both are given.
#[derive(Args, Default)]
struct Shared {
    /// Price CSV with header date,SYM1,...,SYMd
    #[arg(long)]
    input: Option<PathBuf>,
    /// Flat key-value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Copula family (clayton, frank, gumbel, joe, amh, independence) or 'all'
    #[arg(long)]
    family: Option<String>,
    /// Innovation family: normal, student-t, or skewed-t
    #[arg(long)]
    innovation: Option<String>,
    /// Comma-separated risk levels in (0,1), e.g. 0.95,0.99
    #[arg(long)]
    beta: Option<String>,
    /// Comma-separated portfolio weights (normalized to sum one)
    #[arg(long)]
    weights: Option<String>,
    /// Rolling window length for backtests
    #[arg(long)]
    window: Option<usize>,
    /// Monte-Carlo sample count for VaR/CVaR
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Seed for all random streams
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of symbol columns
    #[arg(long)]
    columns: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a price CSV into negative log-returns plus descriptive statistics
    Ingest(Shared),
    /// Fit AR(1)-GARCH(1,1) margins per asset and save the estimates
    FitMargins(Shared),
    /// Fit copula parameters on rank pseudo-observations of the returns
    FitCopula(Shared),
    /// Fit margins and copulas, then report VaR/CVaR/CCVaR per family and risk level
    Risk {
        #[command(flatten)]
        shared: Shared,
        /// Load saved models from this directory instead of refitting
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Rolling 1-day-ahead backtest over the full sample
    Backtest(Shared),
    /// Emit plot-ready CCVaR curves over beta and over theta
    Sweep(Shared),
    /// Generate a synthetic price panel from a copula plus GARCH margins
    Sample {
        #[command(flatten)]
        shared: Shared,
        /// Number of assets
        #[arg(long, default_value_t = 7)]
        dim: usize,
        /// Number of price rows (returns are one fewer)
        #[arg(long, default_value_t = 1361)]
        rows: usize,
        /// Copula parameter
        #[arg(long, default_value_t = 1.57)]
        theta: f64,
        /// Write the raw uniform copula panel instead of prices
        #[arg(long)]
        uniform: bool,
    },
}

impl Shared {
    /// Config file first, then flag overrides.
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                PipelineConfig::from_key_value(&text)?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.input {
            cfg.set("input", &v.to_string_lossy())?;
        }
        if let Some(v) = &self.family {
            cfg.set("family", v)?;
        }
        if let Some(v) = &self.innovation {
            cfg.set("innovation", v)?;
        }
        if let Some(v) = &self.beta {
            cfg.set("beta", v)?;
        }
        if let Some(v) = &self.weights {
            cfg.set("weights", v)?;
        }
        if let Some(v) = self.window {
            cfg.set("window", &v.to_string())?;
        }
        if let Some(v) = self.mc_samples {
            cfg.set("mc_samples", &v.to_string())?;
        }
        if let Some(v) = self.seed {
            cfg.set("seed", &v.to_string())?;
        }
        if let Some(v) = &self.out {
            cfg.set("out_dir", &v.to_string_lossy())?;
        }
        if let Some(v) = &self.columns {
            cfg.set("columns", v)?;
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn load_input(cfg: &PipelineConfig) -> Result<Ingest> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("no input file; pass --input or set it in the config"))?;
    let ing = ingest(Path::new(input), &cfg.columns)?;
    if ing.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} price rows with missing values",
            ing.dropped_rows
        );
    }
    Ok(ing)
}

fn print_report(report: &RiskReport) {
    println!(
        "{:<13} {:<10} {:>6} {:>10} {:>10} {:>10}  method",
        "copula", "margin", "beta", "var", "cvar", "ccvar"
    );
    for row in &report.rows {
        println!(
            "{:<13} {:<10} {:>6} {:>10.4} {:>10.4} {:>10.4}  {}",
            row.copula, row.margin, row.beta, row.var, row.cvar, row.ccvar, row.method
        );
    }
    for failure in &report.failures {
        eprintln!("warning: {failure}");
    }
}

fn cmd_ingest(shared: &Shared) -> Result<()> {
    let cfg = shared.config()?;
    let ing = load_input(&cfg)?;
    let dir = out_dir(&cfg)?;
    write_returns_csv(&ing, &dir.join("returns.csv"))?;
    let stats: Vec<_> = ing
        .names
        .iter()
        .zip(&ing.returns)
        .map(|(name, series)| descriptive_stats(name, series))
        .collect();
    write_stats_csv(&stats, &dir.join("stats.csv"))?;

    println!(
        "ingested {} assets x {} return rows",
        ing.names.len(),
        ing.returns[0].len()
    );
    println!(
        "{:<10} {:>9} {:>8} {:>9} {:>8} {:>9} {:>9} {:>9}",
        "asset", "mean", "std", "min", "median", "max", "kurtosis", "skewness"
    );
    for s in &stats {
        println!(
            "{:<10} {:>9.4} {:>8.4} {:>9.4} {:>8.4} {:>9.4} {:>9.4} {:>9.4}",
            s.name, s.mean, s.std, s.min, s.median, s.max, s.kurtosis, s.skewness
        );
    }
    println!(
        "wrote {} and {}",
        dir.join("returns.csv").display(),
        dir.join("stats.csv").display()
    );
    Ok(())
}

fn cmd_fit_margins(shared: &Shared) -> Result<()> {
    let cfg = shared.config()?;
    let ing = load_input(&cfg)?;
    let dir = out_dir(&cfg)?;
    let fits = fit_margins(&ing.returns, cfg.innovation, None)?;
    write_margin_fits_csv(&ing.names, &fits, &dir.join("margins.csv"))?;
    save_models(&dir.join("models"), &ing.names, &fits, &[])?;

    for (name, fit) in ing.names.iter().zip(&fits) {
        println!(
            "{name}: loglik {:.4}, aic {:.4}, innovation {}",
            fit.loglik,
            fit.aic,
            fit.model.innovation()
        );
        for ((param, value), se) in fit.param_names().iter().zip(fit.params()).zip(&fit.stderr) {
            println!("    {param:<5} {value:>12.6}  (se {se:.6})");
        }
    }
    println!(
        "wrote {} and key-value models under {}",
        dir.join("margins.csv").display(),
        dir.join("models").display()
    );
    Ok(())
}

fn cmd_fit_copula(shared: &Shared) -> Result<()> {
    let cfg = shared.config()?;
    let ing = load_input(&cfg)?;
    let dir = out_dir(&cfg)?;
    let columns: Vec<Vec<f64>> = ing.returns.iter().map(|r| r.values().to_vec()).collect();
    let panel = pseudo_observations(&columns)?;

    let mut fits: Vec<CopulaFit> = Vec::new();
    let mut distances = Vec::new();
    for family in cfg.family.families() {
        match fit_copula_mle(&panel, family) {
            Ok(fit) => {
                let distance = gof_tail_distance(&panel, &fit.spec, 0.9)?;
                println!(
                    "{:<13} theta {:>9.4} (se {:.4})  loglik {:>12.4}  tail-distance {:.3e}{}",
                    family.name(),
                    fit.spec.theta(),
                    fit.stderr,
                    fit.loglik,
                    distance,
                    if fit.boundary { "  [boundary]" } else { "" }
                );
                fits.push(fit);
                distances.push(distance);
            }
            Err(e) => eprintln!("warning: copula {family}: {e}"),
        }
    }
    if fits.is_empty() {
        bail!("no copula family could be fitted");
    }
    write_copula_fits_csv(&fits, &distances, &dir.join("copula.csv"))?;
    save_models(&dir.join("models"), &[], &[], &fits)?;
    println!("wrote {}", dir.join("copula.csv").display());
    Ok(())
}

fn cmd_risk(shared: &Shared, models: &Option<PathBuf>) -> Result<()> {
    let cfg = shared.config()?;
    let dir = out_dir(&cfg)?;
    let (report, betas) = match models {
        Some(models_dir) => {
            let (_, margin_fits, mut copula_fits) = load_models(models_dir)?;
            if copula_fits.is_empty() {
                bail!("no copula_*.txt files in {}", models_dir.display());
            }
            if let FamilyChoice::One(family) = cfg.family {
                copula_fits.retain(|f| f.spec.family() == family);
                if copula_fits.is_empty() {
                    bail!(
                        "no saved fit for copula family '{family}' in {}",
                        models_dir.display()
                    );
                }
            }
            let loaded: Vec<MarginModel> = margin_fits.iter().map(|f| f.model).collect();
            let betas = validate_betas(&cfg.betas)?;
            let weights = cfg.resolved_weights(loaded.len())?;
            let label = loaded[0].innovation().family().name();
            let report = risk_rows_from_models(
                &loaded,
                &copula_fits,
                label,
                &betas,
                &weights,
                cfg.mc_samples,
                cfg.seed,
                &cfg.quad_config(),
            );
            (report, betas)
        }
        None => {
            let ing = load_input(&cfg)?;
            let outcome = risk_once(&ing.names, &ing.returns, &cfg)?;
            save_models(
                &dir.join("models"),
                &ing.names,
                &outcome.margin_fits,
                &outcome.copula_fits,
            )?;
            (outcome.report, cfg.betas.clone())
        }
    };

    write_report_csv(&report, &dir.join("report.csv"))?;
    write_ranges_csv(&report, &betas, &dir.join("report_ranges.csv"))?;
    print_report(&report);
    for &beta in &betas {
        if let (Some(cv), Some(cc)) = (report.cvar_range(beta), report.ccvar_range(beta)) {
            println!("beta {beta}: cvar range across copulas {cv:.4}, ccvar range {cc:.4}");
        }
    }
    println!(
        "wrote {} and {}",
        dir.join("report.csv").display(),
        dir.join("report_ranges.csv").display()
    );
    Ok(())
}

fn cmd_backtest(shared: &Shared) -> Result<()> {
    let cfg = shared.config()?;
    let ing = load_input(&cfg)?;
    let dir = out_dir(&cfg)?;
    let outcome = backtest(&ing.names, &ing.returns, &ing.dates, &cfg)?;
    for failure in &outcome.failures {
        eprintln!("warning: {failure}");
    }
    write_backtest_csv(&outcome.rows, &dir.join("backtest.csv"))?;

    let n_windows = ing.returns[0].len() - cfg.window;
    println!(
        "backtest: {} windows, {} rows, {} failures",
        n_windows,
        outcome.rows.len(),
        outcome.failures.len()
    );
    for &beta in &cfg.betas {
        let rows: Vec<_> = outcome.rows.iter().filter(|r| r.beta == beta).collect();
        if rows.is_empty() {
            continue;
        }
        let exceed = rows.iter().filter(|r| r.realized > r.var).count();
        let ordered = rows
            .iter()
            .filter(|r| r.var <= r.cvar && r.cvar <= r.ccvar)
            .count();
        println!(
            "beta {beta}: VaR exceedance rate {:.4} (expected {:.4}), VaR<=CVaR<=CCVaR in {}/{} rows",
            exceed as f64 / rows.len() as f64,
            1.0 - beta,
            ordered,
            rows.len()
        );
    }
    println!("wrote {}", dir.join("backtest.csv").display());
    Ok(())
}

fn cmd_sweep(shared: &Shared) -> Result<()> {
    let cfg = shared.config()?;
    let dir = out_dir(&cfg)?;
    let quad = cfg.quad_config();

    let beta_points = sweep_beta_grid(5, &default_beta_grid(), &default_beta_sweep_specs(), &quad)?;
    write_sweep_csv(&beta_points, &dir.join("sweep_beta.csv"))?;

    let mut theta_points = sweep_theta_grid(
        Family::Amh,
        &default_theta_grid(Family::Amh),
        0.95,
        &[1.0, 0.0],
        &quad,
    )?;
    theta_points.extend(sweep_theta_grid(
        Family::Gumbel,
        &default_theta_grid(Family::Gumbel),
        0.95,
        &[1.0, 0.0],
        &quad,
    )?);
    write_sweep_csv(&theta_points, &dir.join("sweep_theta.csv"))?;

    println!(
        "wrote {} ({} points) and {} ({} points)",
        dir.join("sweep_beta.csv").display(),
        beta_points.len(),
        dir.join("sweep_theta.csv").display(),
        theta_points.len()
    );
    Ok(())
}

fn cmd_sample(shared: &Shared, dim: usize, rows: usize, theta: f64, uniform: bool) -> Result<()> {
    let cfg = shared.config()?;
    let dir = out_dir(&cfg)?;
    let family = match cfg.family {
        FamilyChoice::One(f) => f,
        FamilyChoice::All => Family::Gumbel,
    };
    let spec = CopulaSpec::new(family, theta, dim)?;

    if uniform {
        let panel = sample_copula(&spec, rows, cfg.seed)?;
        let path = dir.join("uniforms.csv");
        panel.write_csv(&path)?;
        println!(
            "wrote {} ({} rows from the {} copula, theta={theta})",
            path.display(),
            rows,
            family.name()
        );
        return Ok(());
    }

    if rows < 2 {
        bail!("need at least 2 price rows, got {rows}");
    }
    let models = synthetic_margin_models(dim, cfg.innovation)?;
    let returns = generate_synthetic_returns(&spec, &models, rows - 1, cfg.seed)?;
    let prices = returns_to_prices(&returns);
    let dates = synthetic_dates(prices.len());
    let names: Vec<String> = (1..=dim).map(|j| format!("SYM{j}")).collect();
    let path = dir.join("prices.csv");
    write_prices_csv(&names, &dates, &prices, &path)?;
    println!(
        "wrote {} ({} price rows, {} assets, {} copula theta={theta}, {} margins)",
        path.display(),
        rows,
        dim,
        family.name(),
        cfg.innovation
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Ingest(shared) => cmd_ingest(shared),
        Command::FitMargins(shared) => cmd_fit_margins(shared),
        Command::FitCopula(shared) => cmd_fit_copula(shared),
        Command::Risk { shared, models } => cmd_risk(shared, models),
        Command::Backtest(shared) => cmd_backtest(shared),
        Command::Sweep(shared) => cmd_sweep(shared),
        Command::Sample {
            shared,
            dim,
            rows,
            theta,
            uniform,
        } => cmd_sample(shared, *dim, *rows, *theta, *uniform),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, "family clayton\nseed 5\nwindow 800\n").unwrap();
        let shared = Shared {
            config: Some(path),
            family: Some("gumbel".to_string()),
            beta: Some("0.9,0.95".to_string()),
            ..Shared::default()
        };
        let cfg = shared.config().unwrap();
        assert_eq!(cfg.family, FamilyChoice::One(Family::Gumbel));
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.window, 800);
        assert_eq!(cfg.betas, vec![0.9, 0.95]);
    }

    #[test]
    fn empty_beta_list_is_a_usage_error() {
        let shared = Shared {
            beta: Some(",".to_string()),
            ..Shared::default()
        };
        assert!(shared.config().is_err());
    }
}
