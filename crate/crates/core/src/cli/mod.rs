//! Command-line front end.
//!
//! ```text
//! stattrade run grid   --config run.toml [--family KDJ] [--costs on|off|both]
//! stattrade run tests  --matrix daily_matrix.csv --alpha 0.05,0.10 --seed 7 [--bars bars.csv]
//! stattrade run select --matrix daily_matrix.csv [--pool ids.txt]
//! stattrade gen gbm    --out bars.csv --days 250 --sigma 0.25 --seed 1
//! ```
//!
//! The output directory is `--out-dir`, else `$STATTRADE_OUT_DIR`, else the
//! config's `output_dir`.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::datagen::{gbm_series, planted_matrix, GbmSpec};
use crate::ingest::write_bars_to_path;
use crate::stattests::AdfVariant;
use crate::strategy::Family;
use config::RunConfig;
use pipeline::{SelectOptions, TestsOptions};

#[derive(Debug, Parser)]
#[command(name = "stattrade", version, about = "Intraday strategy backtests and data-snooping tests")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch job.
    #[command(subcommand)]
    Run(RunCommand),
    /// Generate synthetic data.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    /// Backtest the strategy grid.
    Grid(GridArgs),
    /// Unit-root and SPA / Step-SPA tests.
    Tests(TestsArgs),
    /// Walk-forward selection over a strategy pool for every window plan.
    Select(SelectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostsFlag {
    On,
    Off,
    Both,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, value_enum)]
    pub costs: Option<CostsFlag>,
}

#[derive(Debug, Args)]
pub struct TestsArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated significance levels.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub continuation: Option<f64>,
    /// Bar file for the unit-root tables.
    #[arg(long)]
    pub bars: Option<PathBuf>,
    /// Bar length of `--bars` in seconds.
    #[arg(long)]
    pub frequency: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    /// ADF regression: ct, c or n.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// File with one strategy id per line; default admits by Sharpe ratio.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Geometric Brownian motion bars.
    Gbm(GbmArgs),
    /// Gaussian performance matrix with one shifted strategy.
    Planted(PlantedArgs),
}

#[derive(Debug, Args)]
pub struct GbmArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub days: usize,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    #[arg(long, default_value_t = 15)]
    pub frequency: u32,
    #[arg(long, default_value_t = 3000.0)]
    pub price: f64,
    #[arg(long, default_value = "2016-01-04")]
    pub start: NaiveDate,
}

#[derive(Debug, Args)]
pub struct PlantedArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub strategies: usize,
    #[arg(long, default_value_t = 500)]
    pub days: usize,
    #[arg(long, default_value_t = 0.0)]
    pub effect: f64,
    #[arg(long, default_value_t = 0)]
    pub column: usize,
    #[arg(long)]
    pub seed: u64,
}

/// Outcome of a command: `failures` counts strategies that errored.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: usize,
}

fn load_optional(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

pub fn execute(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Run(RunCommand::Grid(args)) => {
            let mut config = RunConfig::load(&args.config)?;
            match args.costs {
                Some(CostsFlag::On) => config.costs.include = true,
                Some(CostsFlag::Off) => config.costs.include = false,
                Some(CostsFlag::Both) => {
                    config.costs.include = true;
                    config.costs.compare = true;
                }
                None => {}
            }
            config.validate()?;
            let family = args
                .family
                .as_deref()
                .map(str::parse::<Family>)
                .transpose()?;
            let out = config.output_dir(cli.out_dir.as_deref());
            let summary = in_pool(cli, &config, || pipeline::run_grid(&config, family, &out))?;
            info!(
                "{} backtests, {} failed; outputs in {}",
                summary.runs,
                summary.errors,
                out.display()
            );
            Ok(Outcome {
                failures: summary.errors,
            })
        }
        Command::Run(RunCommand::Tests(args)) => {
            let config = load_optional(args.config.as_deref())?;
            let mut bootstrap = config.bootstrap.clone();
            if let Some(s) = args.seed {
                bootstrap.seed = s;
            }
            if let Some(b) = args.resamples {
                bootstrap.resamples = b;
            }
            if let Some(q) = args.continuation {
                bootstrap.continuation = q;
            }
            let alphas = args.alpha.clone().unwrap_or(config.tests.alphas.clone());
            anyhow::ensure!(!alphas.is_empty(), "no significance levels given");
            let adf_variant = match &args.variant {
                Some(v) => v.parse::<AdfVariant>()?,
                None => config.tests.adf_variant,
            };
            let options = TestsOptions {
                matrix: args.matrix.clone(),
                bars: args.bars.clone().or(config.data.bars.clone()),
                bars_frequency: args.frequency.unwrap_or(config.data.frequency),
                calendar: config.calendar()?,
                alphas,
                bootstrap,
                adf_lags: args.lags.clone().unwrap_or(config.tests.adf_lags.clone()),
                adf_variant,
                adf_alpha: config.tests.adf_alpha,
            };
            let out = config.output_dir(cli.out_dir.as_deref());
            let report = in_pool(cli, &config, || pipeline::run_tests(&options, &out))?;
            for level in &report.levels {
                info!(
                    "alpha {}: SPA reject = {}, Step-SPA significant = {}",
                    level.alpha,
                    level.spa.reject,
                    level.significant.len()
                );
            }
            Ok(Outcome::default())
        }
        Command::Run(RunCommand::Select(args)) => {
            let config = load_optional(args.config.as_deref())?;
            let options = SelectOptions {
                matrix: args.matrix.clone(),
                pool: args.pool.clone().or(config.selector.pool.clone()),
                sharpe_threshold: args.threshold.unwrap_or(config.selector.sharpe_threshold),
            };
            let out = config.output_dir(cli.out_dir.as_deref());
            let pool = in_pool(cli, &config, || pipeline::run_select(&options, &out))?;
            info!("pool of {} strategies; outputs in {}", pool.members.len(), out.display());
            Ok(Outcome::default())
        }
        Command::Gen(GenCommand::Gbm(args)) => {
            let spec = GbmSpec {
                initial_price: args.price,
                sigma: args.sigma,
                drift: args.drift,
                frequency: args.frequency,
                days: args.days,
                start: args.start,
                seed: args.seed,
            };
            let series = gbm_series(&spec, &crate::ingest::SessionCalendar::csi300())?;
            if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            }
            write_bars_to_path(&args.out, &series)?;
            info!("wrote {} bars to {}", series.len(), args.out.display());
            Ok(Outcome::default())
        }
        Command::Gen(GenCommand::Planted(args)) => {
            let m = planted_matrix(args.strategies, args.days, args.effect, args.column, args.seed)?;
            if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            }
            m.write_csv_path(&args.out)?;
            Ok(Outcome::default())
        }
    }
}

/// Runs `f` on a pool with `threads` workers, or the global pool.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> anyhow::Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            anyhow::ensure!(n > 0, "thread count must be positive");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}

/// Applies the config's thread count when `--threads` was not given.
fn in_pool<T: Send>(
    cli: &Cli,
    config: &RunConfig,
    f: impl FnOnce() -> anyhow::Result<T> + Send,
) -> anyhow::Result<T> {
    match cli.threads {
        Some(_) => f(),
        None => with_threads(config.threads, f)?,
    }
}

/// Parses arguments, runs the command and maps the result to an exit code:
/// 0 on success, 1 when some strategies failed, 2 on a fatal error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match with_threads(cli.threads, || execute(&cli)).and_then(|r| r) {
        Ok(outcome) if outcome.failures == 0 => ExitCode::SUCCESS,
        Ok(outcome) => {
            eprintln!("error: {} strategies failed; see errors.csv", outcome.failures);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
