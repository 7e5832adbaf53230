//! Classical and stationary indicator series.
//!
//! Every function works on one contiguous price segment (normally one trading
//! day). Entries before `warmup` are undefined and stored as NaN.

use crate::error::{Error, Result};

/// Indicator values aligned with the input prices.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    values: Vec<f64>,
    warmup: usize,
}

impl IndicatorSeries {
    pub(crate) fn new(values: Vec<f64>, warmup: usize) -> Self {
        debug_assert!(values.iter().take(warmup).all(|v| v.is_nan()));
        Self { values, warmup }
    }

    /// Wraps externally computed values; entries before `warmup` must be NaN
    /// and every later entry finite.
    pub fn from_values(values: Vec<f64>, warmup: usize) -> Result<Self> {
        let (head, tail) = values.split_at(warmup.min(values.len()));
        if head.iter().any(|v| !v.is_nan()) || tail.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "indicator values must be NaN during warm-up and finite afterwards",
            ));
        }
        Ok(Self { values, warmup })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        if i < self.warmup {
            None
        } else {
            self.values.get(i).copied()
        }
    }

    /// Raw values, NaN during warm-up.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Defined values only.
    pub fn defined(&self) -> &[f64] {
        &self.values[self.warmup.min(self.values.len())..]
    }
}

fn undefined(len: usize, warmup: usize) -> Vec<f64> {
    vec![f64::NAN; len.min(warmup)]
}

/// Rolling sums of `prices - prices[0]`; centring keeps the subtraction of
/// prefix sums well conditioned.
fn centred_prefix(prices: &[f64]) -> (f64, Vec<f64>) {
    let base = prices.first().copied().unwrap_or(0.0);
    let mut prefix = Vec::with_capacity(prices.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for p in prices {
        acc += p - base;
        prefix.push(acc);
    }
    (base, prefix)
}

/// Simple moving average `MA(n)`.
pub fn ma(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    if n < 1 {
        return Err(Error::invalid("moving-average window must be at least 1"));
    }
    let warmup = n - 1;
    let (base, prefix) = centred_prefix(prices);
    let mut values = undefined(prices.len(), warmup);
    for t in warmup..prices.len() {
        values.push(base + (prefix[t + 1] - prefix[t + 1 - n]) / n as f64);
    }
    Ok(IndicatorSeries::new(values, warmup))
}

/// Stationary moving average `SMA(n)_t = MA(n)_t / P_t`.
pub fn sma(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    let m = ma(prices, n)?;
    let values = m
        .values
        .iter()
        .zip(prices)
        .map(|(a, p)| a / p)
        .collect();
    Ok(IndicatorSeries::new(values, m.warmup))
}

/// `R(n_s, n_l)_t = MA(n_s)_t / MA(n_l)_t`.
pub fn sma_ratio(prices: &[f64], short: usize, long: usize) -> Result<IndicatorSeries> {
    if short < 1 || short >= long {
        return Err(Error::invalid(format!(
            "sma ratio needs 1 <= short < long, got short={short} long={long}"
        )));
    }
    let s = ma(prices, short)?;
    let l = ma(prices, long)?;
    let warmup = long - 1;
    let mut values = undefined(prices.len(), warmup);
    for t in warmup..prices.len() {
        values.push(s.values[t] / l.values[t]);
    }
    Ok(IndicatorSeries::new(values, warmup))
}

/// Linearly weighted average with weights `n, n-1, ..., 1` (newest first).
pub fn ema(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    if n < 1 {
        return Err(Error::invalid("ema window must be at least 1"));
    }
    let warmup = n - 1;
    let mut values = undefined(prices.len(), warmup);
    for t in warmup..prices.len() {
        values.push(weighted_mean(&prices[t + 1 - n..=t]));
    }
    Ok(IndicatorSeries::new(values, warmup))
}

fn weighted_mean(window: &[f64]) -> f64 {
    let n = window.len();
    let base = window[n - 1];
    let num: f64 = window
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * (p - base))
        .sum();
    base + num / (n * (n + 1) / 2) as f64
}

/// KDJ lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Kdj {
    pub rsv: IndicatorSeries,
    pub k: IndicatorSeries,
    pub d: IndicatorSeries,
    pub j: IndicatorSeries,
}

/// Neutral value used for a flat window (`H = L`) and as the %K/%D seed.
pub const KDJ_NEUTRAL: f64 = 50.0;

/// Stochastic oscillator with RSV window `n`, %K smoothing `m` and %D
/// smoothing `k`:
///
/// ```text
/// RSV_t = 100 (P_t - L_t) / (H_t - L_t)
/// %K_t  = (m-1)/m %K_{t-1} + 1/m RSV_t
/// %D_t  = (k-1)/k %D_{t-1} + 1/k %K_t
/// %J_t  = 3 %K_t - 2 %D_t
/// ```
///
/// %K and %D start from 50 on the bar before the first defined RSV.
pub fn kdj(prices: &[f64], n: usize, m: usize, k: usize) -> Result<Kdj> {
    if n < 1 || m < 1 || k < 1 {
        return Err(Error::invalid(format!(
            "kdj parameters must be positive, got n={n} m={m} k={k}"
        )));
    }
    let warmup = n - 1;
    let len = prices.len();
    let mut rsv = undefined(len, warmup);
    let mut kv = undefined(len, warmup);
    let mut dv = undefined(len, warmup);
    let mut jv = undefined(len, warmup);
    let (wk, wd) = (1.0 / m as f64, 1.0 / k as f64);
    let (mut prev_k, mut prev_d) = (KDJ_NEUTRAL, KDJ_NEUTRAL);
    for t in warmup..len {
        let window = &prices[t + 1 - n..=t];
        let (lo, hi) = window
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        let r = if hi == lo {
            KDJ_NEUTRAL
        } else {
            100.0 * (prices[t] - lo) / (hi - lo)
        };
        let kt = (1.0 - wk) * prev_k + wk * r;
        let dt = (1.0 - wd) * prev_d + wd * kt;
        rsv.push(r);
        kv.push(kt);
        dv.push(dt);
        jv.push(3.0 * kt - 2.0 * dt);
        prev_k = kt;
        prev_d = dt;
    }
    Ok(Kdj {
        rsv: IndicatorSeries::new(rsv, warmup),
        k: IndicatorSeries::new(kv, warmup),
        d: IndicatorSeries::new(dv, warmup),
        j: IndicatorSeries::new(jv, warmup),
    })
}

/// Relative floor under which the band width is treated as zero.
const FLAT_SIGMA: f64 = 1e-12;

/// Stationary Bollinger z-score `(P_t - EMA_t) / sigma_t` with
/// `sigma_t = sqrt(sum (P_i - EMA_t)^2 / (n - 1))` over the window.
/// A flat window (sigma below 1e-12 relative to the price level) yields 0.
pub fn sboll(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    if n < 2 {
        return Err(Error::invalid("sboll window must be at least 2"));
    }
    let warmup = n - 1;
    let mut values = undefined(prices.len(), warmup);
    for t in warmup..prices.len() {
        let window = &prices[t + 1 - n..=t];
        let mid = weighted_mean(window);
        let ss: f64 = window.iter().map(|p| (p - mid).powi(2)).sum();
        let sigma = (ss / (n - 1) as f64).sqrt();
        let z = if sigma <= FLAT_SIGMA * mid.abs().max(f64::MIN_POSITIVE) {
            0.0
        } else {
            (prices[t] - mid) / sigma
        };
        values.push(z);
    }
    Ok(IndicatorSeries::new(values, warmup))
}

/// Classical Bollinger bands around the weighted EMA, using the population
/// deviation `sqrt(sum (P_i - EMA_t)^2 / n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BollingerBands {
    pub mid: IndicatorSeries,
    pub upper: IndicatorSeries,
    pub lower: IndicatorSeries,
}

pub fn bollinger(prices: &[f64], n: usize, width: f64) -> Result<BollingerBands> {
    if n < 1 {
        return Err(Error::invalid("bollinger window must be at least 1"));
    }
    let mid = ema(prices, n)?;
    let warmup = n - 1;
    let mut upper = undefined(prices.len(), warmup);
    let mut lower = undefined(prices.len(), warmup);
    for t in warmup..prices.len() {
        let m = mid.values[t];
        let ss: f64 = prices[t + 1 - n..=t].iter().map(|p| (p - m).powi(2)).sum();
        let sigma = (ss / n as f64).sqrt();
        upper.push(m + width * sigma);
        lower.push(m - width * sigma);
    }
    Ok(BollingerBands {
        mid,
        upper: IndicatorSeries::new(upper, warmup),
        lower: IndicatorSeries::new(lower, warmup),
    })
}

/// Classical crossover input `MA(n_s) - MA(n_l)`.
pub fn ma_spread(prices: &[f64], short: usize, long: usize) -> Result<IndicatorSeries> {
    if short < 1 || short >= long {
        return Err(Error::invalid(format!(
            "ma spread needs 1 <= short < long, got short={short} long={long}"
        )));
    }
    let s = ma(prices, short)?;
    let l = ma(prices, long)?;
    let warmup = long - 1;
    let mut values = undefined(prices.len(), warmup);
    for t in warmup..prices.len() {
        values.push(s.values[t] - l.values[t]);
    }
    Ok(IndicatorSeries::new(values, warmup))
}
