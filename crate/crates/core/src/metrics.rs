//! Performance and risk measures.
//!
//! Degenerate cases (zero variance, no losing days, no trades) are reported
//! as `None` rather than NaN or infinity.

use serde::{Deserialize, Serialize};

use crate::backtest::{equity_curve, BacktestConfig, BacktestOutcome, TradeLedger};
use crate::error::{Error, Result};
use crate::strategy::Side;

/// Trading days per year.
pub const TRADING_DAYS: f64 = 250.0;

/// `(total_pnl / capital) * 250 / n_days`.
pub fn annual_return(total_pnl: f64, n_days: usize, capital: f64) -> Result<f64> {
    if n_days == 0 {
        return Err(Error::invalid("annual return needs at least one day"));
    }
    if !(capital > 0.0) {
        return Err(Error::invalid("capital must be positive"));
    }
    Ok(total_pnl / capital * TRADING_DAYS / n_days as f64)
}

/// `100 * (profit - loss) / max(profit, loss)`; both arguments are magnitudes.
pub fn pnl_index(profit: f64, loss: f64) -> Result<f64> {
    if profit < 0.0 || loss < 0.0 {
        return Err(Error::invalid("profit and loss must be passed as magnitudes"));
    }
    let denom = profit.max(loss);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * (profit - loss) / denom)
}

/// Annualized Sharpe ratio of daily returns with zero risk-free rate and
/// sample standard deviation. `None` when the variance is zero.
pub fn sharpe(daily: &[f64]) -> Result<Option<f64>> {
    if daily.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: daily.len(),
        });
    }
    let n = daily.len() as f64;
    let mean = daily.iter().sum::<f64>() / n;
    let var = daily.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    // Rounding leaves a residual spread of order eps * |mean| on constant input.
    if !(sd > 8.0 * f64::EPSILON * mean.abs()) {
        return Ok(None);
    }
    Ok(Some(mean / sd * TRADING_DAYS.sqrt()))
}

/// `max_i (1 - V_i / max_{j<=i} V_j)`.
pub fn max_drawdown_pct(equity: &[f64]) -> Result<f64> {
    if let Some(v) = equity.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::invalid(format!("equity value {v} is not positive")));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in equity {
        peak = peak.max(v);
        worst = worst.max(1.0 - v / peak);
    }
    Ok(worst)
}

/// Fraction of trades with positive net P&L; `None` without trades.
pub fn win_rate(ledger: &TradeLedger) -> Option<f64> {
    if ledger.is_empty() {
        return None;
    }
    let wins = ledger.trades.iter().filter(|t| t.net_pnl() > 0.0).count();
    Some(wins as f64 / ledger.len() as f64)
}

/// Mean of positive daily P&L over the magnitude of the mean of negative
/// daily P&L. `None` when there are no winning or no losing days.
pub fn ap_over_al(daily_pnl: &[f64]) -> Option<f64> {
    let mean = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
    let ap = mean(daily_pnl.iter().copied().filter(|x| *x > 0.0).collect())?;
    let al = mean(daily_pnl.iter().copied().filter(|x| *x < 0.0).collect())?;
    Some(ap / al.abs())
}

/// Full measure set for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    /// Long deal count.
    pub ldt: usize,
    /// Short deal count.
    pub sdt: usize,
    /// Net currency P&L per trade.
    pub asp: Option<f64>,
    /// Net currency P&L per trading day.
    pub adp: f64,
    pub ar: f64,
    pub mdp: Option<f64>,
    pub ar_mdp: Option<f64>,
    pub sr: Option<f64>,
    pub pnl_index: f64,
    pub wr: Option<f64>,
    pub ap_al: Option<f64>,
    pub days: usize,
    pub net_pnl: f64,
}

pub fn report(outcome: &BacktestOutcome, config: &BacktestConfig) -> Result<BacktestReport> {
    let days = outcome.daily.len();
    let ledger = &outcome.ledger;
    let net = ledger.net_pnl();
    let ar = annual_return(net, days, config.capital)?;
    let mut equity = vec![config.capital];
    equity.extend(equity_curve(&outcome.daily, config).iter().map(|p| p.currency));
    // An account that loses all its capital has drawn down fully.
    let mdp = if equity.iter().any(|v| *v <= 0.0) {
        Some(1.0)
    } else {
        max_drawdown_pct(&equity).ok()
    };
    let ar_mdp = mdp.filter(|m| *m > 0.0).map(|m| ar / m);
    let d: Vec<f64> = outcome.daily.iter().map(|x| x.d).collect();
    let sr = if days >= 2 { sharpe(&d)? } else { None };
    let (profit, loss) = ledger.trades.iter().fold((0.0, 0.0), |(p, l), t| {
        let x = t.net_pnl();
        if x > 0.0 {
            (p + x, l)
        } else {
            (p, l - x)
        }
    });
    let daily_pnl: Vec<f64> = outcome.daily.iter().map(|x| x.pnl).collect();
    Ok(BacktestReport {
        ldt: ledger.count(Side::Long),
        sdt: ledger.count(Side::Short),
        asp: (!ledger.is_empty()).then(|| net / ledger.len() as f64),
        adp: net / days as f64,
        ar,
        mdp,
        ar_mdp,
        sr,
        pnl_index: pnl_index(profit, loss)?,
        wr: win_rate(ledger),
        ap_al: ap_over_al(&daily_pnl),
        days,
        net_pnl: net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::Trade;
    use chrono::NaiveDate;

    #[test]
    fn annual_return_cases() {
        assert_eq!(annual_return(0.0, 10, 1e6).unwrap(), 0.0);
        assert!((annual_return(100_000.0, 250, 1e6).unwrap() - 0.10).abs() < 1e-15);
        assert!((annual_return(50_000.0, 125, 1e6).unwrap() - 0.10).abs() < 1e-15);
        assert!(annual_return(1.0, 0, 1e6).is_err());
    }

    #[test]
    fn pnl_index_cases() {
        assert_eq!(pnl_index(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(pnl_index(200.0, 100.0).unwrap(), 50.0);
        assert_eq!(pnl_index(0.0, 100.0).unwrap(), -100.0);
        assert_eq!(pnl_index(100.0, 0.0).unwrap(), 100.0);
        assert_eq!(pnl_index(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sharpe_cases() {
        assert_eq!(sharpe(&[0.01; 20]).unwrap(), None);
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert_eq!(sharpe(&alt).unwrap(), Some(0.0));
        assert!(sharpe(&[1.0]).is_err());
    }

    #[test]
    fn daily_sharpe_annualizes_by_root_250() {
        // Two-point series with mean 0.1 and sample std 1: daily SR = 0.1.
        let s = 1.0 / 2f64.sqrt();
        let sr = sharpe(&[0.1 + s, 0.1 - s]).unwrap().unwrap();
        assert!((sr - 0.1 * 250f64.sqrt()).abs() < 1e-12);
        assert!((sr - 1.5811).abs() < 1e-4);
    }

    #[test]
    fn drawdown_cases() {
        assert_eq!(max_drawdown_pct(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((max_drawdown_pct(&[1.0, 1.2, 0.9, 1.1]).unwrap() - 0.25).abs() < 1e-15);
        assert!((max_drawdown_pct(&[1.0, 0.5, 1.0, 0.4]).unwrap() - 0.6).abs() < 1e-15);
        assert!(max_drawdown_pct(&[1.0, 0.0]).is_err());
    }

    fn trade(pnl: f64) -> Trade {
        let t = NaiveDate::from_ymd_opt(2016, 1, 4)
            .unwrap()
            .and_hms_opt(10, 0, 0)
            .unwrap();
        Trade {
            side: Side::Long,
            open_bar: 0,
            close_bar: 1,
            open_time: t,
            close_time: t,
            open_price: 1.0,
            close_price: 1.0,
            pnl,
            cost: 0.0,
            forced_close: false,
        }
    }

    #[test]
    fn win_rate_cases() {
        // One trade of +5 points and three of -1: 25% win rate, net +2.
        let ledger = TradeLedger {
            trades: vec![trade(5.0), trade(-1.0), trade(-1.0), trade(-1.0)],
        };
        assert_eq!(win_rate(&ledger), Some(0.25));
        assert_eq!(ledger.net_pnl(), 2.0);
        let all = TradeLedger {
            trades: vec![trade(1.0), trade(2.0)],
        };
        assert_eq!(win_rate(&all), Some(1.0));
        assert_eq!(win_rate(&TradeLedger::default()), None);
    }

    #[test]
    fn ap_al_cases() {
        assert_eq!(ap_over_al(&[2.0, -1.0, 2.0, -1.0]), Some(2.0));
        assert_eq!(ap_over_al(&[2.0, 1.0]), None);
    }
}
