use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use frontier_lab::factor_bias::ConfounderNormalization;
use frontier_lab::harness::config::{ExperimentParams, RealDataSignal};
use frontier_lab::harness::svg::{render_plot, PlotKind};
use frontier_lab::harness::{run_experiment, ExperimentConfig, ExperimentReport};
use frontier_lab::market_data::{equal_mean_walk, geometric_random_walk, write_price_csv, FIXTURE_SEED};
use frontier_lab::signals::BetaSource;
use frontier_lab::stochastics::RngStream;
use frontier_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "frontier-lab", version, about = "Seeded experiments on misspecified signals and mean-variance frontiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Weight pairs under a confounder that partially offsets the signal.
    Cancellation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        b_x: Option<f64>,
        #[arg(long)]
        b_z: Option<f64>,
    },
    /// Monte Carlo slopes against the attenuation law.
    Attenuation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma_zeta_max: Option<f64>,
        #[arg(long)]
        grid_points: Option<usize>,
        /// unit-plus-noise, variance-exact or raw.
        #[arg(long)]
        normalization: Option<String>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Relative Sharpe of power-transformed signals.
    Calibration {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_assets: Option<usize>,
        /// Comma separated exponents.
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<f64>>,
    },
    /// Frontier built from logistic surrogate signals.
    NonlinearFrontier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_obs: Option<usize>,
        #[arg(long)]
        n_assets: Option<usize>,
        /// drawn or fitted.
        #[arg(long)]
        beta_source: Option<String>,
        #[arg(long)]
        return_noise: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Sharpe ratios and frontiers along a family of rotated signals.
    Alignment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_assets: Option<usize>,
        #[arg(long)]
        n_theta: Option<usize>,
        #[arg(long)]
        frontier_points: Option<usize>,
    },
    /// Empirical frontier from a price CSV.
    RealDataFrontier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        date_column: Option<String>,
        #[arg(long)]
        date_format: Option<String>,
        #[arg(long)]
        n_days: Option<usize>,
        #[arg(long)]
        n_assets: Option<usize>,
        #[arg(long)]
        n_points: Option<usize>,
        /// empirical-mean or lagged-logistic.
        #[arg(long)]
        signal: Option<String>,
        #[arg(long)]
        volatility_window: Option<usize>,
    },
    /// Re-render the SVG plots of a saved report.
    Render {
        #[arg(long)]
        report: PathBuf,
        /// Plot kind; all plots of the report when omitted.
        #[arg(long)]
        kind: Option<String>,
        /// Output directory; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic geometric-random-walk price CSV.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FIXTURE_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        tickers: usize,
        #[arg(long, default_value_t = 1200)]
        days: usize,
        /// Give every ticker the same mean return.
        #[arg(long)]
        equal_means: bool,
    },
}

fn base_config(common: &Common, experiment: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment() != experiment {
                return Err(LabError::Config(format!(
                    "{} describes a {} run, not {experiment}",
                    path.display(),
                    cfg.experiment()
                )));
            }
            cfg
        }
        None => ExperimentConfig::default_for(experiment)?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.repetitions = reps;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn parse_kebab<T: serde::de::DeserializeOwned>(raw: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(raw.to_string()))
        .map_err(|_| LabError::Config(format!("unknown {what} {raw:?}")))
}

fn build_config(command: &Command) -> Result<ExperimentConfig> {
    match command {
        Command::Cancellation { common, n, alpha, b_x, b_z } => {
            let mut cfg = base_config(common, "cancellation")?;
            if let ExperimentParams::Cancellation(s) = &mut cfg.params {
                set(&mut s.n, n);
                set(&mut s.alpha, alpha);
                set(&mut s.b_x, b_x);
                set(&mut s.b_z, b_z);
            }
            Ok(cfg)
        }
        Command::Attenuation { common, alpha, beta, gamma, n, sigma_zeta_max, grid_points, normalization, tolerance } => {
            let mut cfg = base_config(common, "attenuation")?;
            if let ExperimentParams::Attenuation(s) = &mut cfg.params {
                set(&mut s.alpha, alpha);
                set(&mut s.beta, beta);
                set(&mut s.gamma, gamma);
                set(&mut s.n, n);
                set(&mut s.sigma_zeta_max, sigma_zeta_max);
                set(&mut s.grid_points, grid_points);
                set(&mut s.tolerance, tolerance);
                if let Some(raw) = normalization {
                    s.normalization = parse_kebab::<ConfounderNormalization>(raw, "normalization")?;
                }
            }
            Ok(cfg)
        }
        Command::Calibration { common, n_assets, powers } => {
            let mut cfg = base_config(common, "calibration")?;
            if let ExperimentParams::Calibration(s) = &mut cfg.params {
                set(&mut s.universe.n_assets, n_assets);
                set(&mut s.powers, powers);
            }
            Ok(cfg)
        }
        Command::NonlinearFrontier { common, n_obs, n_assets, beta_source, return_noise, n_points } => {
            let mut cfg = base_config(common, "nonlinear-frontier")?;
            if let ExperimentParams::NonlinearFrontier(s) = &mut cfg.params {
                set(&mut s.dgp.n_obs, n_obs);
                set(&mut s.dgp.n_features, n_assets);
                set(&mut s.dgp.return_noise, return_noise);
                set(&mut s.n_points, n_points);
                if let Some(raw) = beta_source {
                    s.beta_source = parse_kebab::<BetaSource>(raw, "beta source")?;
                }
            }
            Ok(cfg)
        }
        Command::Alignment { common, n_assets, n_theta, frontier_points } => {
            let mut cfg = base_config(common, "alignment")?;
            if let ExperimentParams::Alignment(s) = &mut cfg.params {
                set(&mut s.universe.n_assets, n_assets);
                set(&mut s.n_theta, n_theta);
                set(&mut s.frontier_points, frontier_points);
            }
            Ok(cfg)
        }
        Command::RealDataFrontier { common, csv, date_column, date_format, n_days, n_assets, n_points, signal, volatility_window } => {
            let mut cfg = base_config(common, "real-data-frontier")?;
            if let ExperimentParams::RealDataFrontier(s) = &mut cfg.params {
                if csv.is_some() {
                    s.csv_path = csv.clone();
                }
                set(&mut s.date_column, date_column);
                set(&mut s.date_format, date_format);
                set(&mut s.n_days, n_days);
                set(&mut s.n_assets, n_assets);
                set(&mut s.n_points, n_points);
                set(&mut s.volatility_window, volatility_window);
                if let Some(raw) = signal {
                    s.signal = parse_kebab::<RealDataSignal>(raw, "signal")?;
                }
            }
            Ok(cfg)
        }
        Command::Render { .. } | Command::Fixture { .. } => unreachable!("not an experiment"),
    }
}

fn render(report_path: &Path, kind: Option<&str>, out: Option<&Path>) -> Result<()> {
    let report = ExperimentReport::load(report_path)?;
    let kinds: Vec<PlotKind> = match kind {
        Some(k) => vec![PlotKind::parse(k)?],
        None => PlotKind::for_experiment(&report.experiment).to_vec(),
    };
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => report_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir)?;
    for k in kinds {
        let path = dir.join(format!("{}.svg", k.name()));
        std::fs::write(&path, render_plot(&report, k)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn fixture(out: &Path, seed: u64, tickers: usize, days: usize, equal_means: bool) -> Result<()> {
    let stream = RngStream::new(seed, 0);
    let panel = if equal_means {
        equal_mean_walk(&stream, tickers, days)?
    } else {
        geometric_random_walk(&stream, tickers, days)?.0
    };
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_price_csv(&panel, out, "Date")?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Render { report, kind, out } => render(report, kind.as_deref(), out.as_deref()).map(|_| true),
        Command::Fixture { out, seed, tickers, days, equal_means } => {
            fixture(out, *seed, *tickers, *days, *equal_means).map(|_| true)
        }
        command => {
            let cfg = build_config(command)?;
            let report = run_experiment(&cfg)?;
            let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
            let dir = report.write(&root)?;
            for c in &report.checks {
                println!("[{}] criterion {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.name, c.detail);
            }
            println!("outputs in {}", dir.display());
            Ok(report.all_passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
