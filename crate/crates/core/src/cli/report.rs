//! CSV and JSON writers for run outputs. Floats use Rust's shortest
//! round-trip formatting; undefined values are written as `NA`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::backtest::EquityPoint;
use crate::metrics::BacktestReport;
use crate::selector::PlanSummary;
use crate::stattests::AdfResult;
use crate::strategy::{Family, StrategySpec, GRID_FREQUENCIES};

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn params_label(spec: &StrategySpec) -> String {
    let id = spec.id();
    id.find('(')
        .map(|i| id[i + 1..id.len() - 1].to_string())
        .unwrap_or_default()
}

pub const REPORT_HEADER: [&str; 17] = [
    "strategy", "family", "freq", "params", "costs", "days", "LTN", "STN", "ASP", "ADP", "AR",
    "MDP", "AR/MDP", "SR", "PnL", "WR", "AP/AL",
];

pub struct ReportRow<'a> {
    pub spec: &'a StrategySpec,
    pub include_costs: bool,
    pub report: &'a BacktestReport,
}

pub fn write_reports(path: &Path, rows: &[ReportRow<'_>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        let r = row.report;
        w.write_record([
            row.spec.id(),
            row.spec.family().to_string(),
            row.spec.frequency.to_string(),
            params_label(row.spec),
            if row.include_costs { "on" } else { "off" }.to_string(),
            r.days.to_string(),
            r.ldt.to_string(),
            r.sdt.to_string(),
            fmt_opt(r.asp),
            r.adp.to_string(),
            r.ar.to_string(),
            fmt_opt(r.mdp),
            fmt_opt(r.ar_mdp),
            fmt_opt(r.sr),
            r.pnl_index.to_string(),
            fmt_opt(r.wr),
            fmt_opt(r.ap_al),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_errors(path: &Path, errors: &[(String, bool, String)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["strategy", "costs", "error"])?;
    for (id, costs, msg) in errors {
        w.write_record([id.as_str(), if *costs { "on" } else { "off" }, msg.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_equity(path: &Path, capital: f64, curve: &[EquityPoint]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["date", "equity", "log_equity"])?;
    w.write_record(["start".to_string(), capital.to_string(), capital.to_string()])?;
    for p in curve {
        w.write_record([p.date.to_string(), p.currency.to_string(), p.log.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per series and lag, in the layout of the ADF result tables.
#[derive(Debug, Clone, Serialize)]
pub struct AdfRecord {
    pub series: String,
    pub frequency: u32,
    pub result: AdfResult,
}

pub fn write_adf_csv(path: &Path, records: &[AdfRecord]) -> anyhow::Result<()> {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "series", "freq", "variant", "lags", "coeff", "tStats", "DFStat", "FStat", "AIC", "BIC",
        "pValue", "H",
    ])?;
    for rec in records {
        let r = &rec.result;
        let variant = match r.variant {
            crate::stattests::AdfVariant::TrendDrift => "ct",
            crate::stattests::AdfVariant::Drift => "c",
            crate::stattests::AdfVariant::None => "n",
        };
        w.write_record([
            rec.series.clone(),
            rec.frequency.to_string(),
            variant.to_string(),
            r.lags.to_string(),
            join(&r.coefficients),
            join(&r.t_stats),
            r.statistic.to_string(),
            r.f_stat.to_string(),
            r.aic.to_string(),
            r.bic.to_string(),
            r.p_value.to_string(),
            u8::from(r.reject).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Significant-strategy counts: family rows, one column per
/// frequency and significance level.
pub fn write_family_counts(
    path: &Path,
    alphas: &[f64],
    counts: &[[[usize; 3]; 3]],
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["family".to_string()];
    for a in alphas {
        for f in GRID_FREQUENCIES {
            header.push(format!("{f}s@{a}"));
        }
    }
    w.write_record(&header)?;
    for (row, family) in Family::ALL.iter().enumerate() {
        let mut record = vec![family.label().to_string()];
        for grid in counts {
            record.extend(grid[row].iter().map(|c| c.to_string()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_plan_summaries(path: &Path, rows: &[PlanSummary]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["Train", "Test", "AR", "MDP", "AR/MDP", "SR"])?;
    for r in rows {
        w.write_record([
            r.train.to_string(),
            r.test.to_string(),
            r.ar.to_string(),
            r.mdp.to_string(),
            fmt_opt(r.ar_mdp),
            fmt_opt(r.sr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// File-name-safe form of a strategy id.
pub fn file_stem(id: &str) -> String {
    let mut out: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    while out.ends_with('_') {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_and_na() {
        assert_eq!(file_stem("MA_15(10,120,0.0001)"), "MA_15_10_120_0.0001");
        assert_eq!(fmt_opt(None), "NA");
        assert_eq!(fmt_opt(Some(0.25)), "0.25");
    }

    #[test]
    fn params_column() {
        let spec: StrategySpec = "Boll_30(120,0.1)".parse().unwrap();
        assert_eq!(params_label(&spec), "120,0.1");
    }
}
