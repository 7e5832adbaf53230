//! Intraday trading-strategy research toolkit: bar ingestion, stationary
//! technical indicators, a cost-aware backtester, performance measures,
//! unit-root and data-snooping tests, and walk-forward strategy selection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod indicators;
pub mod ingest;
pub mod metrics;
pub mod selector;
pub mod snooping;
pub mod stattests;
pub mod strategy;

pub use error::{Error, Result};
