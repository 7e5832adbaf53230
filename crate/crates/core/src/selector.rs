//! Walk-forward selection over a strategy pool.
//!
//! Every `test` days the pool member with the best annual return over
//! maximum drawdown on the trailing `train` days is deployed for the next
//! `test` days. The first `train` days carry no position.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{annual_return, max_drawdown_pct, sharpe};
use crate::snooping::PerformanceMatrix;

/// Default admission threshold on the annualized Sharpe ratio.
pub const POOL_SHARPE_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub members: Vec<String>,
    /// Sharpe threshold used for admission, if the pool was built that way.
    pub sharpe_threshold: Option<f64>,
}

impl PoolSpec {
    /// Pool from an explicit id list; every id must be in `matrix`.
    pub fn from_ids(ids: Vec<String>, matrix: &PerformanceMatrix) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("strategy pool is empty"));
        }
        if let Some(id) = ids.iter().find(|id| matrix.index_of(id).is_none()) {
            return Err(Error::invalid(format!("pool member `{id}` has no performance row")));
        }
        Ok(Self {
            members: ids,
            sharpe_threshold: None,
        })
    }

    /// Members whose full-sample annualized Sharpe ratio exceeds `threshold`.
    pub fn admit_by_sharpe(matrix: &PerformanceMatrix, threshold: f64) -> Result<Self> {
        let mut members = Vec::new();
        for (id, row) in matrix.ids().iter().zip(matrix.rows()) {
            if sharpe(row)?.is_some_and(|sr| sr > threshold) {
                members.push(id.clone());
            }
        }
        if members.is_empty() {
            return Err(Error::invalid(format!(
                "no strategy has a Sharpe ratio above {threshold}"
            )));
        }
        Ok(Self {
            members,
            sharpe_threshold: Some(threshold),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowPlan {
    pub train: usize,
    pub test: usize,
}

impl WindowPlan {
    pub fn new(train: usize, test: usize) -> Result<Self> {
        if test == 0 || test > train {
            return Err(Error::invalid(format!(
                "window plan needs 0 < test <= train, got train {train}, test {test}"
            )));
        }
        Ok(Self { train, test })
    }
}

/// Train 20..=80 and test 10..=train, both in steps of 10.
pub fn enumerate_window_plans() -> Vec<WindowPlan> {
    (20..=80)
        .step_by(10)
        .flat_map(|train| (10..=train).step_by(10).map(move |test| WindowPlan { train, test }))
        .collect()
}

/// Annual return over drawdown of one training window, as an orderable key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    pub ar: f64,
    pub mdp: f64,
}

impl WindowScore {
    pub fn of(daily: &[f64]) -> Result<Self> {
        let ar = annual_return(daily.iter().sum(), daily.len(), 1.0)?;
        let mut equity = Vec::with_capacity(daily.len() + 1);
        let mut log = 0.0;
        equity.push(1.0);
        for d in daily {
            log += d;
            equity.push(log.exp());
        }
        Ok(Self {
            ar,
            mdp: max_drawdown_pct(&equity)?,
        })
    }

    /// `AR / MDP`, with a drawdown-free window counting as `+inf` when it
    /// gains and 0 when it is flat.
    pub fn ratio(&self) -> f64 {
        if self.mdp > 0.0 {
            self.ar / self.mdp
        } else if self.ar > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Ranking order: ratio first, then annual return among infinite ratios.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.ratio(), other.ratio());
        a.total_cmp(&b).then_with(|| {
            if a.is_infinite() && b.is_infinite() {
                self.ar.total_cmp(&other.ar)
            } else {
                Ordering::Equal
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub id: String,
    /// First deployed day (index into the matrix days).
    pub start: usize,
    /// One past the last deployed day.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub plan: WindowPlan,
    /// One value per matrix day; 0 during the initial training span.
    pub composite: Vec<f64>,
    pub deployments: Vec<Deployment>,
}

impl Selection {
    /// Composite days after the initial flat span.
    pub fn deployed(&self) -> &[f64] {
        &self.composite[self.plan.train..]
    }
}

/// Best member on `window` days; ties go to the smallest id.
pub fn select_on_window(
    matrix: &PerformanceMatrix,
    members: &[usize],
    window: std::ops::Range<usize>,
) -> Result<usize> {
    let mut best: Option<(usize, WindowScore)> = None;
    for &k in members {
        let score = WindowScore::of(&matrix.row(k)[window.clone()])?;
        best = match best {
            None => Some((k, score)),
            Some((bk, bs)) => match score.rank_cmp(&bs) {
                Ordering::Greater => Some((k, score)),
                Ordering::Equal if matrix.ids()[k] < matrix.ids()[bk] => Some((k, score)),
                _ => Some((bk, bs)),
            },
        };
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::invalid("strategy pool is empty"))
}

pub fn rolling_select(
    matrix: &PerformanceMatrix,
    pool: &PoolSpec,
    plan: WindowPlan,
) -> Result<Selection> {
    let days = matrix.days();
    if days < plan.train + plan.test {
        return Err(Error::TooShort {
            needed: plan.train + plan.test,
            got: days,
        });
    }
    let members = pool
        .members
        .iter()
        .map(|id| {
            matrix
                .index_of(id)
                .ok_or_else(|| Error::invalid(format!("pool member `{id}` has no performance row")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut composite = vec![0.0; days];
    let mut deployments = Vec::new();
    let mut start = plan.train;
    while start < days {
        let k = select_on_window(matrix, &members, start - plan.train..start)?;
        let end = (start + plan.test).min(days);
        composite[start..end].copy_from_slice(&matrix.row(k)[start..end]);
        deployments.push(Deployment {
            id: matrix.ids()[k].clone(),
            start,
            end,
        });
        start = end;
    }
    Ok(Selection {
        plan,
        composite,
        deployments,
    })
}

/// Summary of one plan's composite, over the deployed days only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub train: usize,
    pub test: usize,
    pub ar: f64,
    pub mdp: f64,
    pub ar_mdp: Option<f64>,
    pub sr: Option<f64>,
}

pub fn summarize(selection: &Selection) -> Result<PlanSummary> {
    let deployed = selection.deployed();
    let score = WindowScore::of(deployed)?;
    let sr = if deployed.len() >= 2 { sharpe(deployed)? } else { None };
    Ok(PlanSummary {
        train: selection.plan.train,
        test: selection.plan.test,
        ar: score.ar,
        mdp: score.mdp,
        ar_mdp: (score.mdp > 0.0).then(|| score.ar / score.mdp),
        sr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn matrix(ids: &[&str], rows: Vec<Vec<f64>>) -> PerformanceMatrix {
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let dates = (0..rows[0].len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        PerformanceMatrix::new(ids.iter().map(|s| s.to_string()).collect(), dates, rows).unwrap()
    }

    fn pool(ids: &[&str]) -> PoolSpec {
        PoolSpec {
            members: ids.iter().map(|s| s.to_string()).collect(),
            sharpe_threshold: None,
        }
    }

    #[test]
    fn plan_grid() {
        let plans = enumerate_window_plans();
        assert_eq!(plans.len(), 35);
        assert!(plans.contains(&WindowPlan { train: 30, test: 20 }));
        assert!(!plans.contains(&WindowPlan { train: 20, test: 30 }));
        assert!(plans.iter().all(|p| p.test <= p.train));
        assert!(WindowPlan::new(20, 30).is_err());
    }

    #[test]
    fn identical_members_shift_by_warmup() {
        let row: Vec<f64> = (0..60).map(|i| ((i * 7) % 5) as f64 * 0.001 - 0.002).collect();
        let m = matrix(&["b", "a"], vec![row.clone(), row.clone()]);
        let sel = rolling_select(&m, &pool(&["b", "a"]), WindowPlan::new(20, 10).unwrap()).unwrap();
        assert!(sel.composite[..20].iter().all(|d| *d == 0.0));
        assert_eq!(&sel.composite[20..], &row[20..]);
        assert!(sel.deployments.iter().all(|d| d.id == "a"));
    }

    #[test]
    fn dominant_member_always_chosen() {
        let a: Vec<f64> = (0..50).map(|i| 0.01 + 0.001 * (i % 3) as f64).collect();
        let b: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 0.005 } else { -0.004 }).collect();
        let m = matrix(&["A", "B"], vec![a.clone(), b]);
        let sel = rolling_select(&m, &pool(&["A", "B"]), WindowPlan::new(20, 10).unwrap()).unwrap();
        assert_eq!(&sel.composite[20..], &a[20..]);
    }

    #[test]
    fn infinite_ratios_rank_by_return() {
        let small = WindowScore { ar: 0.1, mdp: 0.0 };
        let large = WindowScore { ar: 0.2, mdp: 0.0 };
        let finite = WindowScore { ar: 5.0, mdp: 0.01 };
        assert_eq!(large.rank_cmp(&small), Ordering::Greater);
        assert_eq!(small.rank_cmp(&finite), Ordering::Greater);
        assert_eq!(WindowScore { ar: 0.0, mdp: 0.0 }.ratio(), 0.0);
    }

    #[test]
    fn truncated_last_window_and_errors() {
        let m = matrix(&["a"], vec![vec![0.001; 45]]);
        let sel = rolling_select(&m, &pool(&["a"]), WindowPlan::new(20, 20).unwrap()).unwrap();
        assert_eq!(sel.deployments.last().unwrap().end, 45);
        assert_eq!(sel.deployments.len(), 2);
        assert!(rolling_select(&m, &pool(&["a"]), WindowPlan::new(40, 10).unwrap()).is_err());
        assert!(rolling_select(&m, &pool(&["zz"]), WindowPlan::new(20, 10).unwrap()).is_err());
    }

    #[test]
    fn sharpe_admission() {
        let good: Vec<f64> = (0..40).map(|i| 0.01 + 0.001 * (i % 2) as f64).collect();
        let bad: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let m = matrix(&["good", "bad"], vec![good, bad]);
        let p = PoolSpec::admit_by_sharpe(&m, POOL_SHARPE_THRESHOLD).unwrap();
        assert_eq!(p.members, vec!["good".to_string()]);
    }

    #[test]
    fn summary_excludes_warmup() {
        let m = matrix(&["a"], vec![vec![0.001; 40]]);
        let sel = rolling_select(&m, &pool(&["a"]), WindowPlan::new(20, 10).unwrap()).unwrap();
        let s = summarize(&sel).unwrap();
        assert!((s.ar - 0.25).abs() < 1e-12);
        assert_eq!(s.mdp, 0.0);
        assert_eq!(s.ar_mdp, None);
    }
}
