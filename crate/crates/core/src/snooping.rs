//! Data-snooping control: stationary bootstrap, the SPA test and its
//! stepwise variant.
//!
//! Bootstrap resamples are drawn once per plan and reused by every SPA round
//! of the stepwise procedure. Each resample row has its own ChaCha stream
//! keyed by the master seed and the row number, so the index matrix does not
//! depend on how rows are scheduled across threads.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategy::{Family, StrategySpec, GRID_FREQUENCIES};

pub const DEFAULT_RESAMPLES: usize = 500;
pub const DEFAULT_CONTINUATION: f64 = 0.9;
pub const MIN_DAYS: usize = 10;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Daily performance of `K` strategies over `T` common days.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    ids: Vec<String>,
    dates: Vec<NaiveDate>,
    rows: Vec<Vec<f64>>,
}

impl PerformanceMatrix {
    pub fn new(ids: Vec<String>, dates: Vec<NaiveDate>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("performance matrix has no strategies"));
        }
        if ids.len() != rows.len() {
            return Err(Error::Misaligned(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        if dates.len() < MIN_DAYS {
            return Err(Error::TooShort {
                needed: MIN_DAYS,
                got: dates.len(),
            });
        }
        let mut seen = HashSet::new();
        for (id, row) in ids.iter().zip(&rows) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate strategy id `{id}`")));
            }
            if row.len() != dates.len() {
                return Err(Error::Misaligned(format!(
                    "strategy `{id}` has {} days, expected {}",
                    row.len(),
                    dates.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("strategy `{id}` has a non-finite entry")));
            }
        }
        Ok(Self { ids, dates, rows })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn strategies(&self) -> usize {
        self.ids.len()
    }

    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Sub-matrix with the given strategies, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let rows = ids
            .iter()
            .map(|id| {
                self.index_of(id)
                    .map(|k| self.rows[k].clone())
                    .ok_or_else(|| Error::invalid(format!("unknown strategy id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids.to_vec(), self.dates.clone(), rows)
    }

    /// Wide CSV: one row per date, one column per strategy.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut record = vec![date.format(DATE_FORMAT).to_string()];
            record.extend(self.rows.iter().map(|r| r[t].to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<matrix>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::MalformedRow {
                row: 1,
                message: "expected a date column and at least one strategy column".into(),
            });
        }
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut rows = vec![Vec::new(); ids.len()];
        for record in r.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|e| {
                Error::MalformedRow {
                    row: line,
                    message: format!("bad date `{}`: {e}", &record[0]),
                }
            })?;
            dates.push(date);
            for (k, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
                    row: line,
                    message: format!("bad value `{field}` for `{}`", ids[k]),
                })?;
                rows[k].push(v);
            }
        }
        Self::new(ids, dates, rows)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Resampling configuration together with its index matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    resamples: usize,
    continuation: f64,
    seed: u64,
    days: usize,
    /// Row-major `resamples x days`, 0-based day indices.
    indices: Vec<u32>,
}

impl BootstrapPlan {
    pub fn new(days: usize, resamples: usize, continuation: f64, seed: u64) -> Result<Self> {
        let indices = stationary_bootstrap_indices(days, resamples, continuation, seed)?;
        Ok(Self {
            resamples,
            continuation,
            seed,
            days,
            indices,
        })
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn continuation(&self) -> f64 {
        self.continuation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn row(&self, b: usize) -> &[u32] {
        &self.indices[b * self.days..(b + 1) * self.days]
    }

    /// Mean of `values` under each resample.
    pub fn resampled_means(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.days, "row length differs from the plan");
        (0..self.resamples)
            .map(|b| {
                self.row(b).iter().map(|&i| values[i as usize]).sum::<f64>() / self.days as f64
            })
            .collect()
    }
}

/// Circular stationary-bootstrap index matrix, row-major `resamples x days`.
///
/// Each row starts at a uniform day; each later index is the successor of
/// the previous one (mod `days`) with probability `continuation`, otherwise
/// a fresh uniform draw.
pub fn stationary_bootstrap_indices(
    days: usize,
    resamples: usize,
    continuation: f64,
    seed: u64,
) -> Result<Vec<u32>> {
    if days < 2 || days > u32::MAX as usize {
        return Err(Error::invalid(format!("bootstrap needs at least 2 days, got {days}")));
    }
    if resamples == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    if !(0.0..1.0).contains(&continuation) {
        return Err(Error::invalid(format!(
            "continuation probability {continuation} outside [0, 1)"
        )));
    }
    let mut indices = vec![0u32; days * resamples];
    indices
        .par_chunks_mut(days)
        .enumerate()
        .for_each(|(b, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = days as u32;
            row[0] = rng.random_range(0..n);
            for t in 1..days {
                row[t] = if rng.random::<f64>() < continuation {
                    (row[t - 1] + 1) % n
                } else {
                    rng.random_range(0..n)
                };
            }
        });
    Ok(indices)
}

fn bootstrap_variance(means: &[f64], days: usize) -> f64 {
    let b = means.len() as f64;
    let centre = means.iter().sum::<f64>() / b;
    means.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / b * days as f64
}

/// Bootstrap estimate of the standard deviation of `sqrt(n) * mean(row)`.
pub fn omega_hat(row: &[f64], plan: &BootstrapPlan) -> Result<f64> {
    if row.len() != plan.days() {
        return Err(Error::Misaligned(format!(
            "row has {} days, plan has {}",
            row.len(),
            plan.days()
        )));
    }
    if row.iter().all(|v| *v == row[0]) {
        return Err(Error::Degenerate("constant performance row".into()));
    }
    let omega = bootstrap_variance(&plan.resampled_means(row), row.len()).sqrt();
    if !(omega > 0.0) {
        return Err(Error::Degenerate("zero bootstrap variance".into()));
    }
    Ok(omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaStrategy {
    pub id: String,
    pub mean: f64,
    /// `None` for degenerate strategies, which are excluded from the test.
    pub omega: Option<f64>,
    pub recentered_mean: f64,
    pub t_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaResult {
    pub alpha: f64,
    pub strategies: Vec<SpaStrategy>,
    /// Largest studentized mean; 0 when every strategy is excluded.
    pub max_t_stat: f64,
    /// Raw `(1 - alpha)` bootstrap quantile.
    pub quantile: f64,
    /// `max(0, quantile)`.
    pub critical_value: f64,
    pub reject: bool,
    pub excluded: Vec<String>,
}

/// Quantities shared by every SPA round over one matrix and plan.
struct SpaState {
    means: Vec<f64>,
    omegas: Vec<Option<f64>>,
    recentered: Vec<f64>,
    t_stats: Vec<Option<f64>>,
    /// `boot[k][b]`: studentized recentered bootstrap deviation.
    boot: Vec<Vec<f64>>,
}

impl SpaState {
    fn new(matrix: &PerformanceMatrix, plan: &BootstrapPlan) -> Result<Self> {
        if matrix.days() != plan.days() {
            return Err(Error::Misaligned(format!(
                "matrix has {} days, plan has {}",
                matrix.days(),
                plan.days()
            )));
        }
        let days = matrix.days();
        let n = days as f64;
        let threshold = (2.0 * n.ln().ln()).sqrt();
        let per_row: Vec<_> = matrix
            .rows()
            .par_iter()
            .map(|row| {
                let mean = row.iter().sum::<f64>() / n;
                let constant = row.iter().all(|v| *v == row[0]);
                let boot = plan.resampled_means(row);
                let omega = Some(bootstrap_variance(&boot, days).sqrt())
                    .filter(|w| !constant && *w > 0.0);
                let Some(w) = omega else {
                    return (mean, None, 0.0, None, Vec::new());
                };
                let mu = if n.sqrt() * mean <= -w * threshold { mean } else { 0.0 };
                let t = n.sqrt() * mean / w;
                let z = boot
                    .iter()
                    .map(|m| n.sqrt() * (m - mean + mu) / w)
                    .collect();
                (mean, omega, mu, Some(t), z)
            })
            .collect();
        let mut state = SpaState {
            means: Vec::with_capacity(per_row.len()),
            omegas: Vec::with_capacity(per_row.len()),
            recentered: Vec::with_capacity(per_row.len()),
            t_stats: Vec::with_capacity(per_row.len()),
            boot: Vec::with_capacity(per_row.len()),
        };
        for (k, (mean, omega, mu, t, z)) in per_row.into_iter().enumerate() {
            if omega.is_none() {
                log::warn!(
                    "strategy `{}` has zero bootstrap variance and is excluded",
                    matrix.ids()[k]
                );
            }
            state.means.push(mean);
            state.omegas.push(omega);
            state.recentered.push(mu);
            state.t_stats.push(t);
            state.boot.push(z);
        }
        Ok(state)
    }

    /// `(quantile, max_t)` over the strategies in `universe`.
    fn round(&self, universe: &[usize], alpha: f64, resamples: usize) -> (f64, f64) {
        if universe.is_empty() {
            return (0.0, 0.0);
        }
        let mut stats: Vec<f64> = (0..resamples)
            .map(|b| {
                universe
                    .iter()
                    .map(|&k| self.boot[k][b])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        let max_t = universe
            .iter()
            .filter_map(|&k| self.t_stats[k])
            .fold(f64::NEG_INFINITY, f64::max);
        (inf_quantile(&stats, 1.0 - alpha), max_t)
    }

    fn active(&self) -> Vec<usize> {
        (0..self.t_stats.len())
            .filter(|&k| self.t_stats[k].is_some())
            .collect()
    }
}

/// Smallest sample value `v` with at least a `level` fraction of the sorted
/// sample `<= v`.
fn inf_quantile(sorted: &[f64], level: f64) -> f64 {
    let count = (level * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[count.min(sorted.len()) - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("significance level {alpha} outside (0, 1)")))
    }
}

pub fn spa_test(matrix: &PerformanceMatrix, plan: &BootstrapPlan, alpha: f64) -> Result<SpaResult> {
    check_alpha(alpha)?;
    let state = SpaState::new(matrix, plan)?;
    Ok(spa_from_state(&state, matrix, plan.resamples(), alpha))
}

fn spa_from_state(
    state: &SpaState,
    matrix: &PerformanceMatrix,
    resamples: usize,
    alpha: f64,
) -> SpaResult {
    let active = state.active();
    let (quantile, max_t) = state.round(&active, alpha, resamples);
    let max_t = if active.is_empty() { 0.0 } else { max_t };
    let critical_value = quantile.max(0.0);
    let strategies = matrix
        .ids()
        .iter()
        .enumerate()
        .map(|(k, id)| SpaStrategy {
            id: id.clone(),
            mean: state.means[k],
            omega: state.omegas[k],
            recentered_mean: state.recentered[k],
            t_stat: state.t_stats[k],
        })
        .collect();
    let excluded = (0..matrix.strategies())
        .filter(|&k| state.omegas[k].is_none())
        .map(|k| matrix.ids()[k].clone())
        .collect();
    SpaResult {
        alpha,
        strategies,
        max_t_stat: max_t,
        quantile,
        critical_value,
        reject: !active.is_empty() && max_t > critical_value,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpaStep {
    pub id: String,
    pub t_stat: f64,
    pub critical_value: f64,
}

/// Stepwise SPA: repeatedly test the surviving strategies and remove the one
/// with the largest t-statistic while the test rejects. Returns the removed
/// strategies in removal order.
pub fn step_spa(
    matrix: &PerformanceMatrix,
    plan: &BootstrapPlan,
    alpha: f64,
) -> Result<Vec<StepSpaStep>> {
    check_alpha(alpha)?;
    let state = SpaState::new(matrix, plan)?;
    Ok(step_spa_rounds(&state, matrix.ids(), plan.resamples(), alpha))
}

/// SPA and stepwise SPA at several levels sharing one set of resamples.
pub fn spa_levels(
    matrix: &PerformanceMatrix,
    plan: &BootstrapPlan,
    alphas: &[f64],
) -> Result<Vec<(SpaResult, Vec<StepSpaStep>)>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let state = SpaState::new(matrix, plan)?;
    Ok(alphas
        .iter()
        .map(|&a| {
            (
                spa_from_state(&state, matrix, plan.resamples(), a),
                step_spa_rounds(&state, matrix.ids(), plan.resamples(), a),
            )
        })
        .collect())
}

fn step_spa_rounds(
    state: &SpaState,
    ids: &[String],
    resamples: usize,
    alpha: f64,
) -> Vec<StepSpaStep> {
    let mut universe = state.active();
    let mut removed = Vec::new();
    while !universe.is_empty() {
        let (quantile, _) = state.round(&universe, alpha, resamples);
        let critical_value = quantile.max(0.0);
        let (pos, best) = universe
            .iter()
            .enumerate()
            .map(|(pos, &k)| (pos, state.t_stats[k].unwrap_or(f64::NEG_INFINITY)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(best > critical_value) {
            break;
        }
        let k = universe.remove(pos);
        removed.push(StepSpaStep {
            id: ids[k].clone(),
            t_stat: best,
            critical_value,
        });
    }
    removed
}

/// Significant-strategy counts per family (rows) and grid frequency
/// (columns). Ids that do not parse as strategy specs, or use another
/// frequency, are ignored.
pub fn family_counts<'a>(ids: impl IntoIterator<Item = &'a str>) -> [[usize; 3]; 3] {
    let mut grid = [[0usize; 3]; 3];
    for id in ids {
        let Ok(spec) = id.parse::<StrategySpec>() else {
            continue;
        };
        let Some(col) = GRID_FREQUENCIES.iter().position(|f| *f == spec.frequency) else {
            continue;
        };
        let row = Family::ALL.iter().position(|f| *f == spec.family()).unwrap_or(0);
        grid[row][col] += 1;
    }
    grid
}
