//! Row types and readers/writers for the CSV result files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{completion_cdf, per_minute_series, MetricsError, MetricsLog, SweepSummary};
use crate::engine::RebalancingMode;
use crate::rebalancer::RebalanceKind;

pub const SUCCESS_VS_LIQUIDITY: &str = "success_vs_liquidity.csv";
pub const LATENCY_CDF: &str = "latency_cdf.csv";
pub const REBALANCE_PER_MINUTE: &str = "rebalance_per_minute.csv";
pub const COST_SWEEP: &str = "cost_sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    pub liquidity_cents: u64,
    pub success_rate: f64,
    pub mode: RebalancingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub latency_ms: u64,
    pub cumulative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteRow {
    pub minute: u64,
    pub waterfall: u64,
    pub reverse_waterfall: u64,
    pub swaps: u64,
}

/// Costs are in cents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub liquidity_cents: u64,
    pub liquidity_cost: u64,
    pub swap_cost: u64,
    pub total_cost: u64,
}

pub fn latency_rows(log: &MetricsLog, resolution_ms: u64) -> Vec<LatencyRow> {
    completion_cdf(log, resolution_ms)
        .into_iter()
        .map(|(latency_ms, cumulative_fraction)| LatencyRow { latency_ms, cumulative_fraction })
        .collect()
}

pub fn minute_rows(log: &MetricsLog) -> Vec<MinuteRow> {
    let w = per_minute_series(log, RebalanceKind::WaterfallDeposit);
    let r = per_minute_series(log, RebalanceKind::ReverseWithdrawal);
    let s = per_minute_series(log, RebalanceKind::SubmarineSwap);
    let n = w.len().max(r.len()).max(s.len());
    let at = |v: &[(u64, u64)], i: usize| v.get(i).map_or(0, |x| x.1);
    (0..n)
        .map(|i| MinuteRow { minute: i as u64, waterfall: at(&w, i), reverse_waterfall: at(&r, i), swaps: at(&s, i) })
        .collect()
}

/// Cost rows for the points at 100% success.
pub fn cost_rows(summary: &SweepSummary) -> Vec<CostRow> {
    summary
        .cost_curve()
        .map(|r| CostRow {
            liquidity_cents: r.liquidity.0,
            liquidity_cost: r.liquidity_cost.0,
            swap_cost: r.swap_cost.0,
            total_cost: r.total_cost.0,
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a CSV file. Empty tables still get their header line.
pub fn write_csv_file<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), MetricsError> {
    let mut f = File::create(path)?;
    if rows.is_empty() {
        writeln!(f, "{}", header.join(","))?;
        return Ok(());
    }
    write_csv(f, rows)
}

/// Reads a CSV file whose header matches `header` exactly. Errors name the file.
pub fn read_csv_file<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, MetricsError> {
    let bad = |message: String| MetricsError::BadFile { file: path.display().to_string(), message };
    let file = File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let found: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(bad(format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| bad(e.to_string()))
}

pub const SUCCESS_HEADER: [&str; 3] = ["liquidity_cents", "success_rate", "mode"];
pub const LATENCY_HEADER: [&str; 2] = ["latency_ms", "cumulative_fraction"];
pub const MINUTE_HEADER: [&str; 4] = ["minute", "waterfall", "reverse_waterfall", "swaps"];
pub const COST_HEADER: [&str; 4] = ["liquidity_cents", "liquidity_cost", "swap_cost", "total_cost"];
