//! Batch jobs behind the command-line subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{BootstrapConfig, RunConfig};
use super::report::{self, AdfRecord, ReportRow};
use super::svg;
use crate::backtest::{equity_curve, run_backtest, BacktestConfig, BacktestOutcome};
use crate::indicators;
use crate::ingest::{log_returns, parse_bars, resample, BarSeries, ParseOptions, SessionCalendar};
use crate::metrics::{report, BacktestReport};
use crate::selector::{enumerate_window_plans, rolling_select, summarize, PoolSpec};
use crate::snooping::{
    family_counts, spa_levels, BootstrapPlan, PerformanceMatrix, SpaResult, MIN_DAYS,
    StepSpaStep,
};
use crate::stattests::{adf_test, AdfVariant};
use crate::strategy::{positions, Family, StrategySpec, GRID_FREQUENCIES};

/// Bar series for each requested frequency: an explicit per-frequency file
/// when configured, otherwise the base series resampled.
pub fn load_series(
    config: &RunConfig,
    frequencies: &BTreeSet<u32>,
) -> anyhow::Result<BTreeMap<u32, BarSeries>> {
    let calendar = config.calendar()?;
    let options = |frequency| ParseOptions {
        frequency,
        calendar: calendar.clone(),
        missing: config.data.missing,
        ..ParseOptions::default()
    };
    let mut base = None;
    let mut out = BTreeMap::new();
    for &f in frequencies {
        if let Some(path) = config.data.files.get(&f.to_string()) {
            let s = parse_bars(path, &options(f)).with_context(|| path.display().to_string())?;
            out.insert(f, s);
            continue;
        }
        if base.is_none() {
            let Some(path) = &config.data.bars else {
                bail!("no bar data configured for {f}s strategies");
            };
            let s = parse_bars(path, &options(config.data.frequency))
                .with_context(|| path.display().to_string())?;
            base = Some(s);
        }
        let base = base.as_ref().expect("loaded above");
        let s = resample(base, f, &calendar).with_context(|| format!("resampling to {f}s"))?;
        out.insert(f, s);
    }
    Ok(out)
}

pub struct StrategyRun {
    pub spec: StrategySpec,
    pub include_costs: bool,
    pub result: Result<(BacktestReport, BacktestOutcome), String>,
}

/// Backtests every spec in parallel; results keep the order of `specs`.
pub fn evaluate(
    specs: &[StrategySpec],
    series: &BTreeMap<u32, BarSeries>,
    config: &BacktestConfig,
    cross_day_windows: bool,
) -> Vec<StrategyRun> {
    specs
        .par_iter()
        .map(|spec| {
            let result = (|| {
                let bars = series
                    .get(&spec.frequency)
                    .ok_or_else(|| crate::Error::invalid(format!("no {}s data", spec.frequency)))?;
                let pos = positions(spec, bars, cross_day_windows)?;
                let outcome = run_backtest(bars, &pos, config)?;
                let rep = report(&outcome, config)?;
                Ok::<_, crate::Error>((rep, outcome))
            })()
            .map_err(|e| e.to_string());
            StrategyRun {
                spec: *spec,
                include_costs: config.include_costs,
                result,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct GridSummary {
    pub runs: usize,
    pub errors: usize,
    pub matrix: Option<PathBuf>,
}

/// Daily `d` matrix over the dates common to every successful run.
pub fn daily_matrix(runs: &[StrategyRun]) -> anyhow::Result<Option<PerformanceMatrix>> {
    let ok: Vec<_> = runs
        .iter()
        .filter_map(|r| r.result.as_ref().ok().map(|(_, o)| (r.spec.id(), o)))
        .collect();
    if ok.is_empty() {
        return Ok(None);
    }
    let mut common: BTreeSet<NaiveDate> = ok[0].1.daily.iter().map(|p| p.date).collect();
    for (_, o) in &ok[1..] {
        let dates: BTreeSet<NaiveDate> = o.daily.iter().map(|p| p.date).collect();
        common = common.intersection(&dates).copied().collect();
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    if dates.len() < MIN_DAYS {
        warn!(
            "only {} common trading days; daily_matrix.csv needs {MIN_DAYS} and is skipped",
            dates.len()
        );
        return Ok(None);
    }
    let rows = ok
        .iter()
        .map(|(_, o)| {
            o.daily
                .iter()
                .filter(|p| dates.binary_search(&p.date).is_ok())
                .map(|p| p.d)
                .collect()
        })
        .collect();
    let ids = ok.iter().map(|(id, _)| id.clone()).collect();
    Ok(Some(PerformanceMatrix::new(ids, dates, rows)?))
}

pub fn run_grid(
    config: &RunConfig,
    family: Option<Family>,
    out_dir: &Path,
) -> anyhow::Result<GridSummary> {
    let mut specs = config.strategies()?;
    if let Some(f) = family {
        specs.retain(|s| s.family() == f);
    }
    if specs.is_empty() {
        bail!("no strategies selected");
    }
    let frequencies = specs.iter().map(|s| s.frequency).collect();
    let series = load_series(config, &frequencies)?;
    let primary = config.backtest_config()?;
    let mut modes = vec![primary.clone()];
    if config.costs.compare {
        modes.push(BacktestConfig {
            include_costs: !primary.include_costs,
            ..primary.clone()
        });
    }
    info!("backtesting {} strategies in {} cost mode(s)", specs.len(), modes.len());
    let runs: Vec<Vec<StrategyRun>> = modes
        .iter()
        .map(|m| evaluate(&specs, &series, m, config.data.cross_day_windows))
        .collect();

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for run in runs.iter().flatten() {
        match &run.result {
            Ok((rep, _)) => rows.push(ReportRow {
                spec: &run.spec,
                include_costs: run.include_costs,
                report: rep,
            }),
            Err(msg) => {
                warn!("{}: {msg}", run.spec);
                errors.push((run.spec.id(), run.include_costs, msg.clone()));
            }
        }
    }
    report::write_reports(&out_dir.join("reports.csv"), &rows)?;
    report::write_errors(&out_dir.join("errors.csv"), &errors)?;

    let mut summary = GridSummary {
        runs: runs.iter().map(Vec::len).sum(),
        errors: errors.len(),
        matrix: None,
    };
    if let Some(matrix) = daily_matrix(&runs[0])? {
        let path = out_dir.join("daily_matrix.csv");
        matrix.write_csv_path(&path)?;
        summary.matrix = Some(path);
    }
    write_top_equity(&runs[0], &primary, config.report.top, &out_dir.join("equity"))?;
    Ok(summary)
}

fn write_top_equity(
    runs: &[StrategyRun],
    config: &BacktestConfig,
    top: usize,
    dir: &Path,
) -> anyhow::Result<()> {
    let mut ranked: Vec<_> = runs
        .iter()
        .filter_map(|r| r.result.as_ref().ok().map(|(rep, o)| (r.spec.id(), rep.ar, o)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (id, _, outcome) in ranked.into_iter().take(top) {
        let curve = equity_curve(&outcome.daily, config);
        let stem = report::file_stem(&id);
        report::write_equity(&dir.join(format!("{stem}.csv")), config.capital, &curve)?;
        let mut currency = vec![config.capital];
        currency.extend(curve.iter().map(|p| p.currency));
        let mut log = vec![config.capital];
        log.extend(curve.iter().map(|p| p.log));
        let chart = svg::line_chart(&id, &[("equity", &currency), ("log equity", &log)]);
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, chart).with_context(|| path.display().to_string())?;
    }
    Ok(())
}

/// Inputs of the statistical-test job.
#[derive(Debug, Clone)]
pub struct TestsOptions {
    pub matrix: PathBuf,
    pub bars: Option<PathBuf>,
    pub bars_frequency: u32,
    pub calendar: SessionCalendar,
    pub alphas: Vec<f64>,
    pub bootstrap: BootstrapConfig,
    pub adf_lags: Vec<usize>,
    pub adf_variant: AdfVariant,
    pub adf_alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpaLevel {
    pub alpha: f64,
    pub spa: SpaResult,
    pub step_spa: Vec<StepSpaStep>,
    pub significant: Vec<String>,
    /// Family label -> frequency -> count.
    pub family_counts: BTreeMap<String, BTreeMap<u32, usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpaReport {
    pub strategies: usize,
    pub days: usize,
    pub resamples: usize,
    pub continuation: f64,
    pub seed: u64,
    pub levels: Vec<SpaLevel>,
}

/// Representative stationary indicators for the unit-root tables.
fn indicator_series(bars: &BarSeries) -> crate::Result<Vec<(String, Vec<f64>)>> {
    let mut ratio = Vec::new();
    let mut k = Vec::new();
    let mut z = Vec::new();
    for day in bars.day_ranges() {
        let p = &bars.prices()[day];
        if p.len() < 20 {
            continue;
        }
        ratio.extend(indicators::sma_ratio(p, 5, 20)?.defined());
        k.extend(indicators::kdj(p, 9, 3, 3)?.k.defined());
        z.extend(indicators::sboll(p, 20)?.defined());
    }
    Ok(vec![
        ("sma_ratio(5,20)".to_string(), ratio),
        ("kdj_k(9,3,3)".to_string(), k),
        ("sboll(20)".to_string(), z),
    ])
}

pub fn run_adf(options: &TestsOptions, path: &Path) -> anyhow::Result<Vec<AdfRecord>> {
    let parse = ParseOptions {
        frequency: options.bars_frequency,
        calendar: options.calendar.clone(),
        ..ParseOptions::default()
    };
    let base = parse_bars(path, &parse).with_context(|| path.display().to_string())?;
    let mut series = vec![base.clone()];
    for f in GRID_FREQUENCIES {
        if f > base.frequency() && f % base.frequency() == 0 {
            series.push(resample(&base, f, &options.calendar)?);
        }
    }
    let mut jobs = Vec::new();
    for s in &series {
        jobs.push((s.frequency(), "log_return".to_string(), log_returns(s)?.values));
        for (name, values) in indicator_series(s)? {
            jobs.push((s.frequency(), name, values));
        }
    }
    let results: Vec<anyhow::Result<Vec<AdfRecord>>> = jobs
        .par_iter()
        .map(|(freq, name, values)| {
            options
                .adf_lags
                .iter()
                .map(|&lags| {
                    let result = adf_test(values, lags, options.adf_variant, options.adf_alpha)
                        .with_context(|| format!("ADF on {name} at {freq}s, {lags} lags"))?;
                    Ok(AdfRecord {
                        series: name.clone(),
                        frequency: *freq,
                        result,
                    })
                })
                .collect()
        })
        .collect();
    Ok(results.into_iter().collect::<anyhow::Result<Vec<_>>>()?.concat())
}

pub fn run_tests(options: &TestsOptions, out_dir: &Path) -> anyhow::Result<SpaReport> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    if let Some(bars) = &options.bars {
        let records = run_adf(options, bars)?;
        report::write_json(&out_dir.join("adf.json"), &records)?;
        report::write_adf_csv(&out_dir.join("adf.csv"), &records)?;
    }
    let matrix = PerformanceMatrix::read_csv_path(&options.matrix)
        .with_context(|| options.matrix.display().to_string())?;
    let b = &options.bootstrap;
    let plan = BootstrapPlan::new(matrix.days(), b.resamples, b.continuation, b.seed)?;
    let results = spa_levels(&matrix, &plan, &options.alphas)?;
    let mut levels = Vec::new();
    let mut grids = Vec::new();
    for (&alpha, (spa, step)) in options.alphas.iter().zip(results) {
        let significant: Vec<String> = step.iter().map(|s| s.id.clone()).collect();
        let grid = family_counts(significant.iter().map(String::as_str));
        let counts = Family::ALL
            .iter()
            .zip(grid)
            .map(|(f, row)| {
                let by_freq = GRID_FREQUENCIES.iter().copied().zip(row).collect();
                (f.label().to_string(), by_freq)
            })
            .collect();
        grids.push(grid);
        levels.push(SpaLevel {
            alpha,
            spa,
            step_spa: step,
            significant,
            family_counts: counts,
        });
    }
    let out = SpaReport {
        strategies: matrix.strategies(),
        days: matrix.days(),
        resamples: b.resamples,
        continuation: b.continuation,
        seed: b.seed,
        levels,
    };
    report::write_json(&out_dir.join("spa.json"), &out)?;
    report::write_family_counts(&out_dir.join("step_spa_counts.csv"), &options.alphas, &grids)?;
    Ok(out)
}

pub fn read_pool_file(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub matrix: PathBuf,
    pub pool: Option<PathBuf>,
    pub sharpe_threshold: f64,
}

pub fn run_select(options: &SelectOptions, out_dir: &Path) -> anyhow::Result<PoolSpec> {
    let matrix = PerformanceMatrix::read_csv_path(&options.matrix)
        .with_context(|| options.matrix.display().to_string())?;
    let pool = match &options.pool {
        Some(path) => PoolSpec::from_ids(read_pool_file(path)?, &matrix)?,
        None => PoolSpec::admit_by_sharpe(&matrix, options.sharpe_threshold)?,
    };
    let selections = enumerate_window_plans()
        .into_par_iter()
        .map(|plan| rolling_select(&matrix, &pool, plan))
        .collect::<crate::Result<Vec<_>>>()?;
    let summaries = selections
        .iter()
        .map(summarize)
        .collect::<crate::Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    report::write_plan_summaries(&out_dir.join("selection.csv"), &summaries)?;
    let mut w = csv::Writer::from_writer(report::create(&out_dir.join("deployments.csv"))?);
    w.write_record(["train", "test", "first_day", "last_day", "strategy"])?;
    let dates = matrix.dates();
    for sel in &selections {
        for dep in &sel.deployments {
            w.write_record([
                sel.plan.train.to_string(),
                sel.plan.test.to_string(),
                dates[dep.start].to_string(),
                dates[dep.end - 1].to_string(),
                dep.id.clone(),
            ])?;
        }
    }
    w.flush()?;
    let mut pool_file = report::create(&out_dir.join("pool.txt"))?;
    for id in &pool.members {
        std::io::Write::write_all(&mut pool_file, format!("{id}\n").as_bytes())?;
    }
    std::io::Write::flush(&mut pool_file)?;
    Ok(pool)
}
