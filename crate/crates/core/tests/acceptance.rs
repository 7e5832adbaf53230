//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line before
//! asserting, so `cargo test --test acceptance -- --nocapture` gives a
//! checklist.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use stattrade::backtest::{cost_for_transition, run_backtest, BacktestConfig, CostSchedule};
use stattrade::datagen::{gbm_series, planted_matrix, GbmSpec};
use stattrade::indicators::{kdj, sboll, sma_ratio};
use stattrade::ingest::{log_returns, BarSeries, MissingBarPolicy, SessionCalendar};
use stattrade::metrics::{max_drawdown_pct, pnl_index, sharpe};
use stattrade::selector::{
    enumerate_window_plans, rolling_select, PoolSpec, WindowPlan, WindowScore,
};
use stattrade::snooping::{
    spa_levels, stationary_bootstrap_indices, BootstrapPlan, PerformanceMatrix,
};
use stattrade::stattests::{adf_test, AdfVariant};
use stattrade::strategy::{enumerate_grid, positions, Family, PositionSeries};

fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:>2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Synthetic bars truncated to `bars` entries.
fn bar_series(frequency: u32, bars: usize, seed: u64) -> BarSeries {
    let per_day = 14_400 / frequency as usize;
    let spec = GbmSpec {
        frequency,
        days: bars.div_ceil(per_day),
        seed,
        ..GbmSpec::default()
    };
    let calendar = SessionCalendar::csi300();
    let full = gbm_series(&spec, &calendar).unwrap();
    let rows = full.bars().take(bars).collect();
    BarSeries::new(frequency, rows, &calendar, MissingBarPolicy::Reject).unwrap()
}

/// Sticky random path in {-1, 0, 1}, flat at every day's last bar.
fn random_positions(series: &BarSeries, r: &mut ChaCha8Rng) -> PositionSeries {
    let mut pos = vec![0i8; series.len()];
    let mut cur = 0i8;
    for p in pos.iter_mut() {
        if r.random::<f64>() < 0.1 {
            cur = r.random_range(-1..=1);
        }
        *p = cur;
    }
    for day in series.day_ranges() {
        pos[day.end - 1] = 0;
    }
    PositionSeries::from_positions(pos, series.day_starts().to_vec()).unwrap()
}

fn flat_costs(rate: f64) -> BacktestConfig {
    BacktestConfig {
        costs: CostSchedule::flat(rate).unwrap(),
        ..BacktestConfig::default()
    }
}

#[test]
fn criterion_01_grid_cardinality() {
    let start = Instant::now();
    let grid = enumerate_grid();
    let elapsed = start.elapsed();
    let count = |f| grid.iter().filter(|s| s.family() == f).count();
    let (ma, kdj, boll) = (count(Family::Ma), count(Family::Kdj), count(Family::Boll));
    verdict(
        1,
        "grid cardinality",
        grid.len() == 279 && ma == 192 && kdj == 15 && boll == 72 && elapsed < Duration::from_secs(1),
        &format!("{} specs ({ma} MA, {kdj} KDJ, {boll} Boll) in {elapsed:?}", grid.len()),
    );
}

#[test]
fn criterion_02_daily_return_matches_trade_ledger() {
    let series = bar_series(15, 1000, 2);
    let prices = series.prices();
    let config = flat_costs(0.0);
    let mut worst = 0.0f64;
    for path in 0..100u64 {
        let pos = random_positions(&series, &mut rng(202, path));
        let outcome = run_backtest(&series, &pos, &config).unwrap();
        let streaming: f64 = outcome.daily.iter().map(|d| d.d).sum();

        // Brute force: walk the path, book each holding period as a trade.
        let p = pos.positions();
        let mut oracle = 0.0;
        let mut open: Option<(i8, usize)> = None;
        for day in series.day_ranges() {
            for t in day.clone() {
                let prev = if t == day.start { 0 } else { p[t - 1] };
                if p[t] != prev {
                    if let Some((side, at)) = open.take() {
                        oracle += f64::from(side) * (prices[t] / prices[at]).ln();
                    }
                    if p[t] != 0 {
                        open = Some((p[t], t));
                    }
                }
            }
        }
        assert!(open.is_none());
        let ledger: f64 = outcome.ledger.trades.iter().map(|t| t.log_return()).sum();
        worst = worst.max((streaming - oracle).abs()).max((ledger - oracle).abs());
    }
    verdict(
        2,
        "streaming daily d equals trade-ledger log returns",
        worst <= 1e-10,
        &format!("100 paths x 1000 bars, max abs diff {worst:e} (tol 1e-10)"),
    );
}

#[test]
fn criterion_03_cost_accounting() {
    let c = 23e-4;
    let unit = (0.9977f64 / 1.0023).ln();
    let mut worst_unit = 0.0f64;
    for prev in -1i8..=1 {
        for next in -1i8..=1 {
            let units = f64::from((next - prev).abs());
            let got = cost_for_transition(prev, next, c).unwrap();
            worst_unit = worst_unit.max((got - units * unit).abs());
        }
    }
    let series = bar_series(15, 2000, 3);
    let mut worst_total = 0.0f64;
    let mut units_ok = true;
    for path in 0..20u64 {
        let pos = random_positions(&series, &mut rng(303, path));
        let with = run_backtest(&series, &pos, &flat_costs(c)).unwrap();
        let without = run_backtest(&series, &pos, &flat_costs(0.0)).unwrap();
        let p = pos.positions();
        let mut expected_units = 0u64;
        for day in series.day_ranges() {
            let mut prev = 0i8;
            for t in day {
                expected_units += u64::from((p[t] - prev).unsigned_abs());
                prev = p[t];
            }
        }
        units_ok &= with.cost_units == expected_units && without.cost_units == expected_units;
        let charged: f64 = with
            .daily
            .iter()
            .zip(&without.daily)
            .map(|(a, b)| a.d - b.d)
            .sum();
        let direct = expected_units as f64 * unit;
        worst_total = worst_total.max((charged - direct).abs() / expected_units.max(1) as f64);
    }
    verdict(
        3,
        "cost accounting at 23 bp",
        worst_unit <= 1e-12 && worst_total <= 1e-12 && units_ok,
        &format!(
            "per-transition diff {worst_unit:e}, per-unit total diff {worst_total:e} (tol 1e-12), unit counts exact: {units_ok}"
        ),
    );
}

#[test]
fn criterion_04_indicator_scale_invariance() {
    let mut worst = 0.0f64;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    for i in 0..50u64 {
        let mut r = rng(404, i);
        let mut p = 100.0 * (1.0 + r.random::<f64>());
        let prices: Vec<f64> = (0..400)
            .map(|_| {
                p *= (0.01 * normal(&mut r)).exp();
                p
            })
            .collect();
        let c = 10f64.powf(r.random_range(-3.0..3.0));
        let scaled: Vec<f64> = prices.iter().map(|x| c * x).collect();
        let mut compare = |a: &[f64], b: &[f64]| {
            for (x, y) in a.iter().zip(b) {
                if x.is_nan() {
                    assert!(y.is_nan());
                } else {
                    worst = worst.max(rel(*x, *y));
                }
            }
        };
        compare(
            sma_ratio(&prices, 5, 60).unwrap().values(),
            sma_ratio(&scaled, 5, 60).unwrap().values(),
        );
        let (a, b) = (kdj(&prices, 9, 3, 3).unwrap(), kdj(&scaled, 9, 3, 3).unwrap());
        compare(a.k.values(), b.k.values());
        compare(a.d.values(), b.d.values());
        compare(a.j.values(), b.j.values());
        compare(sboll(&prices, 30).unwrap().values(), sboll(&scaled, 30).unwrap().values());
    }
    verdict(
        4,
        "indicator scale invariance",
        worst <= 1e-9,
        &format!("50 series, max relative diff {worst:e} (tol 1e-9)"),
    );
}

#[test]
fn criterion_05_adf_size_and_power() {
    let start = Instant::now();
    let alpha = 0.05;
    let reps = 500u64;
    let n = 5000;
    let outcomes: Vec<(bool, bool)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(505, i);
            let noise: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
            let mut walk = noise.clone();
            for t in 1..n {
                walk[t] += walk[t - 1];
            }
            let rw = adf_test(&walk, 0, AdfVariant::TrendDrift, alpha).unwrap().reject;
            let wn = adf_test(&noise, 0, AdfVariant::TrendDrift, alpha).unwrap().reject;
            (rw, wn)
        })
        .collect();
    let size = outcomes.iter().filter(|o| o.0).count() as f64 / reps as f64;
    let power = outcomes.iter().filter(|o| o.1).count() as f64 / reps as f64;

    let bars = gbm_series(
        &GbmSpec {
            days: 10,
            seed: 5,
            ..GbmSpec::default()
        },
        &SessionCalendar::csi300(),
    )
    .unwrap();
    let returns = log_returns(&bars).unwrap().values;
    let gbm_h: Vec<bool> = (0..=2)
        .map(|lags| adf_test(&returns, lags, AdfVariant::TrendDrift, alpha).unwrap().reject)
        .collect();
    let elapsed = start.elapsed();
    verdict(
        5,
        "ADF size and power",
        (size - alpha).abs() <= 0.03
            && power > 0.99
            && gbm_h.iter().all(|h| *h)
            && elapsed < Duration::from_secs(120),
        &format!(
            "random-walk rejection {size:.3} (target {alpha} +/- 0.03), white-noise rejection {power:.3} (> 0.99), GBM returns H at lags 0..2 = {gbm_h:?}, {elapsed:.1?}"
        ),
    );
}

#[test]
fn criterion_06_spa_size() {
    let start = Instant::now();
    let trials = 200u64;
    let alphas = [0.05, 0.10];
    let rejections: Vec<[bool; 2]> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let m = planted_matrix(50, 500, 0.0, 0, 6000 + i).unwrap();
            let plan = BootstrapPlan::new(500, 500, 0.9, 7000 + i).unwrap();
            let res = spa_levels(&m, &plan, &alphas).unwrap();
            [res[0].0.reject, res[1].0.reject]
        })
        .collect();
    let rate = |j: usize| rejections.iter().filter(|r| r[j]).count() as f64 / trials as f64;
    let (r05, r10) = (rate(0), rate(1));
    let elapsed = start.elapsed();
    verdict(
        6,
        "SPA size",
        r05 <= 0.05 + 0.04 && r10 <= 0.10 + 0.04 && elapsed < Duration::from_secs(300),
        &format!(
            "K=50, T=500, B=500, Q=0.9, 200 trials: rejection {r05:.3} at 0.05 (<= 0.09), {r10:.3} at 0.10 (<= 0.14), {elapsed:.1?}"
        ),
    );
}

#[test]
fn criterion_07_step_spa_power() {
    let start = Instant::now();
    let trials = 200u64;
    let (k, t) = (50, 500);
    let effect = 5.0 / (t as f64).sqrt();
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let planted = (i as usize) % k;
            let m = planted_matrix(k, t, effect, planted, 8000 + i).unwrap();
            let plan = BootstrapPlan::new(t, 500, 0.9, 9000 + i).unwrap();
            let steps = &spa_levels(&m, &plan, &[0.05]).unwrap()[0].1;
            steps.iter().any(|s| s.id == m.ids()[planted])
        })
        .collect();
    let power = hits.iter().filter(|h| **h).count() as f64 / trials as f64;
    let elapsed = start.elapsed();
    verdict(
        7,
        "Step-SPA power",
        power > 0.90 && elapsed < Duration::from_secs(300),
        &format!("effect 5/sqrt(T), alpha 0.05, 200 trials: recovery {power:.3} (> 0.90), {elapsed:.1?}"),
    );
}

#[test]
fn criterion_08_bootstrap_mechanics() {
    let days = 1000;
    let rows = 2000;
    let idx = stationary_bootstrap_indices(days, rows, 0.9, 88).unwrap();
    let mut blocks = 0usize;
    for row in idx.chunks(days) {
        blocks += 1 + row
            .windows(2)
            .filter(|w| w[1] != (w[0] + 1) % days as u32)
            .count();
    }
    let mean_block = (days * rows) as f64 / blocks as f64;

    let cells = 100;
    let draws = 10_000;
    let uniform = stationary_bootstrap_indices(cells, draws, 0.0, 89).unwrap();
    let mut counts = vec![0usize; cells];
    for &i in &uniform {
        counts[i as usize] += 1;
    }
    let expected = uniform.len() as f64 / cells as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    verdict(
        8,
        "bootstrap mechanics",
        (mean_block - 10.0).abs() <= 0.5 && p > 0.01,
        &format!(
            "mean block length {mean_block:.3} (10 +/- 0.5); Q=0 chi-square {chi2:.1} on 99 df over {} draws, p = {p:.3} (> 0.01)",
            uniform.len()
        ),
    );
}

fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
    (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
}

/// Independent re-implementation: for each deployed day find its window,
/// score every member on the trailing days and copy the winner's value.
fn stitched_oracle(matrix: &PerformanceMatrix, pool: &[String], plan: WindowPlan) -> Vec<f64> {
    let days = matrix.days();
    let mut out = vec![0.0; days];
    for (t, slot) in out.iter_mut().enumerate().skip(plan.train) {
        let start = plan.train + (t - plan.train) / plan.test * plan.test;
        let mut best: Option<(&String, WindowScore)> = None;
        for id in pool {
            let row = matrix.row(matrix.index_of(id).unwrap());
            let score = WindowScore::of(&row[start - plan.train..start]).unwrap();
            let better = match &best {
                None => true,
                Some((bid, bs)) => match score.rank_cmp(bs) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Equal => id < *bid,
                    std::cmp::Ordering::Less => false,
                },
            };
            if better {
                best = Some((id, score));
            }
        }
        let id = best.unwrap().0;
        *slot = matrix.row(matrix.index_of(id).unwrap())[t];
    }
    out
}

#[test]
fn criterion_09_selector() {
    let plans = enumerate_window_plans();
    let days = 400;
    // Three members whose good regime rotates every 10 days, plus noise.
    let ids: Vec<String> = ["alpha", "beta", "gamma"].iter().map(|s| s.to_string()).collect();
    let mut r = rng(909, 0);
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            (0..days)
                .map(|t| {
                    let good = (t / 10) % 3 == k;
                    (if good { 0.004 } else { -0.001 }) + 0.002 * normal(&mut r)
                })
                .collect()
        })
        .collect();
    let matrix = PerformanceMatrix::new(ids.clone(), dates(days), rows).unwrap();
    let pool = PoolSpec::from_ids(ids.clone(), &matrix).unwrap();

    let mut oracle_ok = true;
    let mut distinct_winners = true;
    for &plan in &plans {
        let sel = rolling_select(&matrix, &pool, plan).unwrap();
        oracle_ok &= sel.composite == stitched_oracle(&matrix, &ids, plan);
        let winners: std::collections::BTreeSet<_> = sel.deployments.iter().map(|d| &d.id).collect();
        if plan == (WindowPlan { train: 20, test: 10 }) {
            distinct_winners = winners.len() == 3;
        }
    }

    // Causality: scrambling every day from a deployment's start onwards
    // leaves that deployment's choice unchanged.
    let plan = WindowPlan::new(30, 20).unwrap();
    let base = rolling_select(&matrix, &pool, plan).unwrap();
    let mut causal = true;
    for dep in &base.deployments {
        let mut r = rng(910, dep.start as u64);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                let mut row = matrix.row(k).to_vec();
                for v in &mut row[dep.start..] {
                    *v = 0.05 * normal(&mut r);
                }
                row
            })
            .collect();
        let perturbed = PerformanceMatrix::new(ids.clone(), dates(days), rows).unwrap();
        let sel = rolling_select(&perturbed, &pool, plan).unwrap();
        let same = sel.deployments.iter().find(|d| d.start == dep.start).unwrap();
        causal &= same.id == dep.id;
    }
    verdict(
        9,
        "selector",
        plans.len() == 35 && oracle_ok && distinct_winners && causal,
        &format!(
            "{} plans; stitched oracle exact on all plans: {oracle_ok}; rotating winners: {distinct_winners}; no lookahead: {causal}",
            plans.len()
        ),
    );
}

#[test]
fn criterion_10_metrics() {
    let mdp = max_drawdown_pct(&[1.0, 1.2, 0.9, 1.1]).unwrap();
    let s = 1.0 / 2f64.sqrt();
    let sr = sharpe(&[0.1 + s, 0.1 - s]).unwrap().unwrap();
    let pnl = [
        pnl_index(0.0, 100.0).unwrap(),
        pnl_index(100.0, 100.0).unwrap(),
        pnl_index(100.0, 0.0).unwrap(),
    ];
    verdict(
        10,
        "metrics",
        (mdp - 0.25).abs() < 1e-12 && (sr - 1.5811).abs() < 5e-5 && pnl == [-100.0, 0.0, 100.0],
        &format!("MDP {mdp}, daily SR 0.1 annualized {sr:.4}, PnL boundaries {pnl:?}"),
    );
}

fn collect_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run_cli(args: &[&str]) -> std::process::ExitCode {
    stattrade::cli::main_with_args(std::iter::once("stattrade").chain(args.iter().copied()))
}

#[test]
fn criterion_11_thread_count_determinism() {
    let work = tempfile::tempdir().unwrap();
    let root = work.path();
    let bars = root.join("bars.csv");
    let bars_s = bars.to_str().unwrap();
    let code = run_cli(&["gen", "gbm", "--out", bars_s, "--days", "170", "--sigma", "0.25", "--seed", "11"]);
    assert_eq!(code, std::process::ExitCode::SUCCESS);
    std::fs::write(
        root.join("run.toml"),
        "[data]\nbars = \"bars.csv\"\n[costs]\ncompare = true\n[report]\ntop = 3\n",
    )
    .unwrap();
    let pool = root.join("pool.txt");
    let pool_s = pool.to_str().unwrap();
    std::fs::write(
        &pool,
        "MA_60(5,20,0.0005)\nKDJ_30(9,3,3)\nBoll_15(60,1.5)\nBoll_60(20,0.5)\n",
    )
    .unwrap();

    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out = root.join(format!("out_{threads}"));
        let out_s = out.to_str().unwrap();
        let config = root.join("run.toml");
        let matrix = out.join("daily_matrix.csv");
        let steps: [Vec<&str>; 3] = [
            vec!["run", "grid", "--config", config.to_str().unwrap()],
            vec![
                "run", "tests", "--matrix", matrix.to_str().unwrap(), "--alpha", "0.05,0.10",
                "--seed", "42", "--bars", bars_s,
            ],
            vec!["run", "select", "--matrix", matrix.to_str().unwrap(), "--pool", pool_s],
        ];
        for step in steps {
            let mut args = vec!["--threads", threads, "--out-dir", out_s];
            args.extend(step);
            assert_eq!(run_cli(&args), std::process::ExitCode::SUCCESS, "{args:?}");
        }
        runs.push(collect_outputs(&out));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let same_files = a.keys().eq(b.keys());
    let mut compared = 0;
    let mut identical = true;
    let mut svg_ok = true;
    for (name, bytes) in a {
        let other = &b[name];
        if name.ends_with(".svg") {
            let shape = |x: &[u8]| String::from_utf8_lossy(x).matches("<polyline").count();
            svg_ok &= shape(bytes) == shape(other) && shape(bytes) > 0;
        } else {
            compared += 1;
            identical &= bytes == other;
        }
    }
    let expected = ["reports.csv", "daily_matrix.csv", "spa.json", "adf.json", "selection.csv"];
    let complete = expected.iter().all(|f| a.contains_key(*f));
    verdict(
        11,
        "determinism across thread counts",
        same_files && identical && svg_ok && complete,
        &format!(
            "{compared} CSV/JSON files byte-identical with 1 vs 4 threads: {identical}; same file set: {same_files}; SVG structure equal: {svg_ok}"
        ),
    );
}

#[test]
fn criterion_12_flat_at_day_end() {
    let calendar = SessionCalendar::csi300();
    let base = gbm_series(
        &GbmSpec {
            days: 5,
            seed: 12,
            sigma: 0.4,
            ..GbmSpec::default()
        },
        &calendar,
    )
    .unwrap();
    let mut series = BTreeMap::new();
    for f in [15, 30, 60] {
        series.insert(f, stattrade::ingest::resample(&base, f, &calendar).unwrap());
    }
    let grid = enumerate_grid();
    let violations: usize = grid
        .par_iter()
        .map(|spec| {
            let bars = &series[&spec.frequency];
            let pos = positions(spec, bars, false).unwrap();
            let p = pos.positions();
            let mut bad = bars.day_ranges().iter().filter(|d| p[d.end - 1] != 0).count();
            bad += usize::from(run_backtest(bars, &pos, &BacktestConfig::default()).is_err());
            bad
        })
        .sum();
    let traded = grid
        .iter()
        .filter(|spec| {
            let pos = positions(spec, &series[&spec.frequency], false).unwrap();
            pos.positions().iter().any(|p| *p != 0)
        })
        .count();
    verdict(
        12,
        "flat at every day end",
        violations == 0 && traded > 0,
        &format!("{} strategies x 5 days, {violations} violations, {traded} strategies traded", grid.len()),
    );
}
