//! TOML run configuration.
//!
//! ```toml
//! output_dir = "out"
//!
//! [data]
//! bars = "bars_15s.csv"      # base series, resampled to coarser grid frequencies
//! frequency = 15
//! missing = "reject"         # or "forward-fill"
//! [data.files]
//! "60" = "bars_60s.csv"      # optional per-frequency override
//!
//! [costs]
//! include = true
//! compare = false            # also run every strategy without costs
//! schedule = [{ effective = "2016-01-01", bp = 0.23 }]
//!
//! [grid]
//! families = ["MA", "KDJ", "Boll"]
//! frequencies = [15, 30, 60]
//! strategies = []            # explicit ids override families
//!
//! [bootstrap]
//! resamples = 500
//! continuation = 0.9
//! seed = 0
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestConfig, CostSchedule, BASIS_POINT};
use crate::ingest::{CalendarEntry, MissingBarPolicy, SessionCalendar};
use crate::selector::POOL_SHARPE_THRESHOLD;
use crate::snooping::{DEFAULT_CONTINUATION, DEFAULT_RESAMPLES};
use crate::stattests::AdfVariant;
use crate::strategy::{grid, Family, StrategySpec, GRID_FREQUENCIES};

pub const OUT_DIR_ENV: &str = "STATTRADE_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub data: DataConfig,
    pub calendar: Option<Vec<CalendarEntryConfig>>,
    pub costs: CostConfig,
    pub backtest: CapitalConfig,
    pub grid: GridConfig,
    pub bootstrap: BootstrapConfig,
    pub tests: TestsConfig,
    pub selector: SelectorConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            threads: None,
            data: DataConfig::default(),
            calendar: None,
            costs: CostConfig::default(),
            backtest: CapitalConfig::default(),
            grid: GridConfig::default(),
            bootstrap: BootstrapConfig::default(),
            tests: TestsConfig::default(),
            selector: SelectorConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub bars: Option<PathBuf>,
    pub frequency: u32,
    pub files: BTreeMap<String, PathBuf>,
    pub missing: MissingBarPolicy,
    /// Let indicator windows span several trading days.
    pub cross_day_windows: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            bars: None,
            frequency: 15,
            files: BTreeMap::new(),
            missing: MissingBarPolicy::Reject,
            cross_day_windows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarEntryConfig {
    pub effective: NaiveDate,
    /// `"HH:MM-HH:MM"` session windows.
    pub windows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub effective: NaiveDate,
    /// One-way rate in basis points.
    pub bp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub include: bool,
    pub compare: bool,
    pub schedule: Option<Vec<CostEntry>>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            include: true,
            compare: false,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapitalConfig {
    pub capital: f64,
    pub multiplier: f64,
}

impl Default for CapitalConfig {
    fn default() -> Self {
        let d = BacktestConfig::default();
        Self {
            capital: d.capital,
            multiplier: d.multiplier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub families: Vec<String>,
    pub frequencies: Vec<u32>,
    pub strategies: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.iter().map(|f| f.label().to_string()).collect(),
            frequencies: GRID_FREQUENCIES.to_vec(),
            strategies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub continuation: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            continuation: DEFAULT_CONTINUATION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestsConfig {
    pub alphas: Vec<f64>,
    pub adf_lags: Vec<usize>,
    pub adf_variant: AdfVariant,
    pub adf_alpha: f64,
}

impl Default for TestsConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.05, 0.10],
            adf_lags: vec![0, 1, 2],
            adf_variant: AdfVariant::TrendDrift,
            adf_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    /// File with one pool strategy id per line.
    pub pool: Option<PathBuf>,
    pub sharpe_threshold: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            pool: None,
            sharpe_threshold: POOL_SHARPE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Strategies (by annual return) that get equity-curve outputs.
    pub top: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { top: 5 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config =
            Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let Some(p) = self.data.bars.as_mut() {
            join(p);
        }
        self.data.files.values_mut().for_each(join);
        if let Some(p) = self.selector.pool.as_mut() {
            join(p);
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for &a in &self.tests.alphas {
            ensure!(a > 0.0 && a < 1.0, "significance level {a} outside (0, 1)");
        }
        let adf = self.tests.adf_alpha;
        ensure!(adf > 0.0 && adf < 1.0, "ADF significance level {adf} outside (0, 1)");
        ensure!(self.threads != Some(0), "thread count must be positive");
        let files = self.data.bars.iter().chain(self.data.files.values());
        for p in files.chain(self.selector.pool.iter()) {
            ensure!(p.is_file(), "referenced file {} does not exist", p.display());
        }
        for key in self.data.files.keys() {
            key.parse::<u32>()
                .with_context(|| format!("data file key `{key}` is not a frequency"))?;
        }
        self.backtest_config()?;
        self.calendar()?;
        self.strategies()?;
        Ok(())
    }

    pub fn calendar(&self) -> anyhow::Result<SessionCalendar> {
        let Some(entries) = &self.calendar else {
            return Ok(SessionCalendar::csi300());
        };
        let entries = entries
            .iter()
            .map(|e| {
                let windows = e
                    .windows
                    .iter()
                    .map(|w| w.parse())
                    .collect::<crate::Result<Vec<_>>>()?;
                Ok(CalendarEntry {
                    effective: e.effective,
                    windows,
                })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(SessionCalendar::new(entries)?)
    }

    pub fn backtest_config(&self) -> anyhow::Result<BacktestConfig> {
        let costs = match &self.costs.schedule {
            None => CostSchedule::csi300(),
            Some(entries) => CostSchedule::new(
                entries
                    .iter()
                    .map(|e| (e.effective, e.bp * BASIS_POINT))
                    .collect(),
            )?,
        };
        let config = BacktestConfig {
            capital: self.backtest.capital,
            multiplier: self.backtest.multiplier,
            costs,
            include_costs: self.costs.include,
        };
        config.validate()?;
        Ok(config)
    }

    /// Selected strategies in grid order.
    pub fn strategies(&self) -> anyhow::Result<Vec<StrategySpec>> {
        if !self.grid.strategies.is_empty() {
            return self
                .grid
                .strategies
                .iter()
                .map(|id| {
                    let spec: StrategySpec = id.parse()?;
                    spec.validate()?;
                    Ok(spec)
                })
                .collect();
        }
        let families = self
            .grid
            .families
            .iter()
            .map(|f| f.parse())
            .collect::<crate::Result<Vec<Family>>>()?;
        if families.is_empty() || self.grid.frequencies.is_empty() {
            bail!("grid selection is empty");
        }
        Ok(grid(&families, &self.grid.frequencies))
    }

    /// Flag beats environment beats config file.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}
