//! Synthetic data: geometric Brownian motion bars and planted-signal
//! performance matrices.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BarSeries, SessionCalendar};
use crate::metrics::TRADING_DAYS;
use crate::snooping::{PerformanceMatrix, MIN_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmSpec {
    pub initial_price: f64,
    /// Annualized volatility.
    pub sigma: f64,
    /// Annualized drift.
    pub drift: f64,
    /// Bar length in seconds.
    pub frequency: u32,
    /// Number of trading days (weekdays from `start`).
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for GbmSpec {
    fn default() -> Self {
        Self {
            initial_price: 3000.0,
            sigma: 0.25,
            drift: 0.0,
            frequency: 15,
            days: 20,
            start: NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date"),
            seed: 0,
        }
    }
}

impl GbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_price > 0.0 && self.initial_price.is_finite()) {
            return Err(Error::invalid("initial price must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("volatility must be non-negative"));
        }
        if !self.drift.is_finite() {
            return Err(Error::invalid("drift must be finite"));
        }
        if self.days == 0 {
            return Err(Error::invalid("day count must be at least 1"));
        }
        if self.frequency == 0 {
            return Err(Error::invalid("bar frequency must be positive"));
        }
        Ok(())
    }
}

/// Consecutive weekdays starting at `start` (moved forward off a weekend).
pub fn weekdays(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut day = start;
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

/// Bar-to-bar log increments are Gaussian with mean `(r - sigma^2/2) dt` and
/// variance `sigma^2 dt`, where `dt = frequency / (250 * session seconds)`.
/// The first bar is at `initial_price`.
pub fn gbm_series(spec: &GbmSpec, calendar: &SessionCalendar) -> Result<BarSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    let mut log_change = 0.0;
    for date in weekdays(spec.start, spec.days) {
        let times = calendar.bar_times(date, spec.frequency);
        if times.is_empty() {
            return Err(Error::invalid(format!(
                "no {}s bars fit the session on {date}",
                spec.frequency
            )));
        }
        let dt = f64::from(spec.frequency) / (TRADING_DAYS * calendar.session_seconds(date) as f64);
        let mean = (spec.drift - 0.5 * spec.sigma * spec.sigma) * dt;
        let scale = spec.sigma * dt.sqrt();
        for t in times {
            if !prices.is_empty() {
                let z: f64 = StandardNormal.sample(&mut rng);
                log_change += mean + scale * z;
            }
            timestamps.push(t);
            prices.push(spec.initial_price * f64::exp(log_change));
        }
    }
    Ok(BarSeries::from_parts(spec.frequency, timestamps, prices))
}

/// `strategies x days` matrix of independent standard normals with
/// `effect` added to every entry of strategy `planted`.
pub fn planted_matrix(
    strategies: usize,
    days: usize,
    effect: f64,
    planted: usize,
    seed: u64,
) -> Result<PerformanceMatrix> {
    if strategies < 2 {
        return Err(Error::invalid("planted matrix needs at least 2 strategies"));
    }
    if days < MIN_DAYS {
        return Err(Error::TooShort {
            needed: MIN_DAYS,
            got: days,
        });
    }
    if planted >= strategies {
        return Err(Error::invalid(format!(
            "planted strategy {planted} out of range for {strategies} strategies"
        )));
    }
    let width = strategies.to_string().len().max(3);
    let ids = (0..strategies).map(|k| format!("s{k:0width$}")).collect();
    let rows = (0..strategies)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let shift = if k == planted { effect } else { 0.0 };
            (0..days)
                .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect();
    let start = NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date");
    PerformanceMatrix::new(ids, weekdays(start, days), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{log_returns, parse_bars_from_reader, write_bars, ParseOptions};

    #[test]
    fn zero_volatility_is_deterministic_drift() {
        let spec = GbmSpec {
            sigma: 0.0,
            drift: 0.05,
            days: 2,
            ..GbmSpec::default()
        };
        let s = gbm_series(&spec, &SessionCalendar::csi300()).unwrap();
        let r: Vec<f64> = s.prices().windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let dt = 15.0 / (250.0 * 14_400.0);
        assert!(r.iter().all(|x| (x - 0.05 * dt).abs() < 1e-15));
    }

    #[test]
    fn series_respects_calendar() {
        let spec = GbmSpec {
            days: 3,
            start: NaiveDate::from_ymd_opt(2016, 1, 8).unwrap(),
            ..GbmSpec::default()
        };
        let s = gbm_series(&spec, &SessionCalendar::csi300()).unwrap();
        assert_eq!(s.day_count(), 3);
        assert_eq!(s.len(), 3 * 960);
        let dates = s.dates();
        assert_eq!(dates[1], NaiveDate::from_ymd_opt(2016, 1, 11).unwrap());
    }

    #[test]
    fn moments_within_three_standard_errors() {
        let spec = GbmSpec {
            sigma: 0.3,
            drift: 0.1,
            days: 1050,
            seed: 42,
            ..GbmSpec::default()
        };
        let s = gbm_series(&spec, &SessionCalendar::csi300()).unwrap();
        let r: Vec<f64> = s.prices().windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        assert!(r.len() >= 1_000_000);
        let n = r.len() as f64;
        let dt = 15.0 / (250.0 * 14_400.0);
        let var_true = 0.09 * dt;
        let mean_true = (0.1 - 0.045) * dt;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - mean_true).abs() < 3.0 * (var_true / n).sqrt());
        assert!((var - var_true).abs() < 3.0 * var_true * (2.0 / (n - 1.0)).sqrt());
    }

    #[test]
    fn write_parse_round_trip() {
        let spec = GbmSpec {
            days: 2,
            seed: 3,
            ..GbmSpec::default()
        };
        let s = gbm_series(&spec, &SessionCalendar::csi300()).unwrap();
        let mut buf = Vec::new();
        write_bars(&mut buf, &s).unwrap();
        let back = parse_bars_from_reader(buf.as_slice(), &ParseOptions::default()).unwrap();
        assert_eq!(back.prices(), s.prices());
        assert_eq!(back.timestamps(), s.timestamps());
        assert!(log_returns(&back).is_ok());
    }

    #[test]
    fn planted_means_and_determinism() {
        let m = planted_matrix(5, 4000, 0.5, 2, 7).unwrap();
        assert_eq!(m, planted_matrix(5, 4000, 0.5, 2, 7).unwrap());
        let tol = 3.0 / (4000f64).sqrt();
        for (k, row) in m.rows().iter().enumerate() {
            let target = if k == 2 { 0.5 } else { 0.0 };
            let mean = row.iter().sum::<f64>() / 4000.0;
            assert!((mean - target).abs() < tol, "strategy {k}: {mean}");
        }
        assert!(planted_matrix(1, 20, 0.0, 0, 0).is_err());
        assert!(planted_matrix(3, 20, 0.0, 3, 0).is_err());
    }

    #[test]
    fn seeds_decorrelate() {
        let a = planted_matrix(2, 50_000, 0.0, 0, 1).unwrap();
        let b = planted_matrix(2, 50_000, 0.0, 0, 2).unwrap();
        let x: Vec<f64> = a.rows().iter().flatten().copied().collect();
        let y: Vec<f64> = b.rows().iter().flatten().copied().collect();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
        assert!((cov / (sx * sy)).abs() < 0.05);
    }
}
