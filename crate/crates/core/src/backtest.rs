//! Cost-adjusted log-return accounting and the currency trade ledger.
//!
//! For each day with bars `1..N` the daily performance is
//!
//! ```text
//! d = sum_{n=1}^{N-1} ( I_n (p_{n+1} - p_n) + ln((1-c)/(1+c)) |I_{n+1} - I_n| )
//! ```
//!
//! with `p` the log price, `I` the position and `c` the one-sided cost rate
//! in force on that date. A position already held on the first bar of a day
//! is charged as an open from flat.

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BarSeries;
use crate::strategy::{PositionSeries, Side};

/// Effective-dated one-sided cost rates (fraction of notional).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSchedule {
    entries: Vec<(NaiveDate, f64)>,
}

/// One ten-thousandth.
pub const BASIS_POINT: f64 = 1e-4;

impl CostSchedule {
    pub fn new(entries: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::invalid(format!(
                    "cost schedule dates must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((d, c)) = entries.iter().find(|(_, c)| !(0.0..1.0).contains(c)) {
            return Err(Error::invalid(format!("cost rate {c} on {d} outside [0, 1)")));
        }
        Ok(Self { entries })
    }

    /// CFFEX index-futures fee history, 2012-01-04 to 2015-09-07.
    pub fn csi300() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        Self {
            entries: vec![
                (d(2012, 1, 4), 0.5 * BASIS_POINT),
                (d(2012, 6, 1), 0.35 * BASIS_POINT),
                (d(2012, 9, 1), 0.25 * BASIS_POINT),
                (d(2015, 8, 3), 0.23 * BASIS_POINT),
                (d(2015, 8, 26), 1.15 * BASIS_POINT),
                (d(2015, 9, 7), 23.0 * BASIS_POINT),
            ],
        }
    }

    pub fn flat(rate: f64) -> Result<Self> {
        Self::new(vec![(NaiveDate::MIN, rate)])
    }

    pub fn entries(&self) -> &[(NaiveDate, f64)] {
        &self.entries
    }

    /// Rate of the latest entry on or before `date`; 0 before the first entry.
    pub fn rate_on(&self, date: NaiveDate) -> f64 {
        let i = self.entries.partition_point(|(d, _)| *d <= date);
        i.checked_sub(1).map_or(0.0, |i| self.entries[i].1)
    }
}

impl Default for CostSchedule {
    fn default() -> Self {
        Self::csi300()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub capital: f64,
    /// Currency per index point of one contract.
    pub multiplier: f64,
    pub costs: CostSchedule,
    pub include_costs: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            capital: 1_000_000.0,
            multiplier: 300.0,
            costs: CostSchedule::csi300(),
            include_costs: true,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.capital > 0.0) {
            return Err(Error::invalid("capital must be positive"));
        }
        if !(self.multiplier > 0.0) {
            return Err(Error::invalid("multiplier must be positive"));
        }
        Ok(())
    }

    fn rate_on(&self, date: NaiveDate) -> f64 {
        if self.include_costs {
            self.costs.rate_on(date)
        } else {
            0.0
        }
    }
}

/// Log-return charge for moving from `prev` to `next` at one-sided cost `c`.
pub fn cost_for_transition(prev: i8, next: i8, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::invalid(format!("cost rate {c} outside [0, 1)")));
    }
    if ![prev, next].iter().all(|p| (-1..=1).contains(p)) {
        return Err(Error::invalid("positions must be in {-1, 0, 1}"));
    }
    let units = (i32::from(next) - i32::from(prev)).abs();
    if units == 0 {
        return Ok(0.0);
    }
    Ok(log_cost(c) * f64::from(units))
}

fn log_cost(c: f64) -> f64 {
    ((1.0 - c) / (1.0 + c)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyPerformance {
    pub date: NaiveDate,
    /// Cost-adjusted log return of the day.
    pub d: f64,
    /// Net currency P&L of trades closed that day.
    pub pnl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub side: Side,
    pub open_bar: usize,
    pub close_bar: usize,
    pub open_time: NaiveDateTime,
    pub close_time: NaiveDateTime,
    pub open_price: f64,
    pub close_price: f64,
    /// Gross currency P&L: `side * (close - open) * multiplier`.
    pub pnl: f64,
    /// Currency cost of both sides.
    pub cost: f64,
    pub forced_close: bool,
}

impl Trade {
    pub fn net_pnl(&self) -> f64 {
        self.pnl - self.cost
    }

    /// `side * (ln close - ln open)`.
    pub fn log_return(&self) -> f64 {
        f64::from(self.side.sign()) * (self.close_price.ln() - self.open_price.ln())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeLedger {
    pub trades: Vec<Trade>,
}

impl TradeLedger {
    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    pub fn count(&self, side: Side) -> usize {
        self.trades.iter().filter(|t| t.side == side).count()
    }

    pub fn net_pnl(&self) -> f64 {
        self.trades.iter().map(Trade::net_pnl).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOutcome {
    pub daily: Vec<DailyPerformance>,
    pub ledger: TradeLedger,
    /// Total `sum |I_{n+1} - I_n|`, i.e. the number of one-sided cost charges.
    pub cost_units: u64,
}

pub fn run_backtest(
    series: &BarSeries,
    positions: &PositionSeries,
    config: &BacktestConfig,
) -> Result<BacktestOutcome> {
    config.validate()?;
    if positions.len() != series.len() {
        return Err(Error::Misaligned(format!(
            "{} positions for {} bars",
            positions.len(),
            series.len()
        )));
    }
    if positions.day_starts() != series.day_starts() {
        return Err(Error::Misaligned(
            "position day boundaries differ from the bar series".into(),
        ));
    }
    let prices = series.prices();
    let times = series.timestamps();
    let pos = positions.positions();
    let mut daily = Vec::with_capacity(series.day_count());
    let mut ledger = TradeLedger::default();
    let mut cost_units = 0u64;

    for range in series.day_ranges() {
        let date = times[range.start].date();
        let last = range.end - 1;
        if pos[last] != 0 {
            return Err(Error::Misaligned(format!(
                "position on {date} is {} at the day's last bar",
                pos[last]
            )));
        }
        let c = config.rate_on(date);
        let charge = log_cost(c);
        let mut d = 0.0;
        let mut pnl = 0.0;
        let mut open: Option<(Side, usize)> = None;
        let mut prev = 0i8;
        for t in range.clone() {
            let cur = pos[t];
            let units = (i32::from(cur) - i32::from(prev)).unsigned_abs();
            if units > 0 {
                cost_units += u64::from(units);
                if c > 0.0 {
                    d += charge * f64::from(units);
                }
                if let Some((side, at)) = open.take() {
                    let trade = close_trade(series, side, at, t, c, config, t == last);
                    pnl += trade.net_pnl();
                    ledger.trades.push(trade);
                }
                if let Some(side) = Side::of(cur) {
                    open = Some((side, t));
                }
            }
            if t < last && cur != 0 {
                d += f64::from(cur) * (prices[t + 1].ln() - prices[t].ln());
            }
            prev = cur;
        }
        debug_assert!(open.is_none());
        daily.push(DailyPerformance { date, d, pnl });
    }
    Ok(BacktestOutcome {
        daily,
        ledger,
        cost_units,
    })
}

fn close_trade(
    series: &BarSeries,
    side: Side,
    open_bar: usize,
    close_bar: usize,
    c: f64,
    config: &BacktestConfig,
    forced_close: bool,
) -> Trade {
    let prices = series.prices();
    let times = series.timestamps();
    let (open_price, close_price) = (prices[open_bar], prices[close_bar]);
    Trade {
        side,
        open_bar,
        close_bar,
        open_time: times[open_bar],
        close_time: times[close_bar],
        open_price,
        close_price,
        pnl: f64::from(side.sign()) * (close_price - open_price) * config.multiplier,
        cost: c * (open_price + close_price) * config.multiplier,
        forced_close,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    /// Capital plus cumulative net currency P&L.
    pub currency: f64,
    /// `capital * exp(cumulative d)`.
    pub log: f64,
}

pub fn equity_curve(daily: &[DailyPerformance], config: &BacktestConfig) -> Vec<EquityPoint> {
    let mut cash = config.capital;
    let mut cum_d = 0.0;
    daily
        .iter()
        .map(|day| {
            cash += day.pnl;
            cum_d += day.d;
            EquityPoint {
                date: day.date,
                currency: cash,
                log: config.capital * cum_d.exp(),
            }
        })
        .collect()
}
