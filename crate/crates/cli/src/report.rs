//! `shpcn report`: a human-readable digest of a sweep directory.

use std::fmt::Write;
use std::path::Path;

use shpcn_core::metrics::{
    read_csv_file, CostRow, LatencyRow, MinuteRow, SuccessRow, COST_HEADER, COST_SWEEP, LATENCY_CDF, LATENCY_HEADER,
    MINUTE_HEADER, REBALANCE_PER_MINUTE, SUCCESS_HEADER, SUCCESS_VS_LIQUIDITY,
};
use shpcn_core::{Money, RebalancingMode};

use crate::CliError;

pub fn report(dir: &Path) -> Result<(), CliError> {
    print!("{}", render(dir)?);
    Ok(())
}

pub fn render(dir: &Path) -> Result<String, CliError> {
    let success: Vec<SuccessRow> = read_csv_file(&dir.join(SUCCESS_VS_LIQUIDITY), &SUCCESS_HEADER)?;
    let cost: Vec<CostRow> = read_csv_file(&dir.join(COST_SWEEP), &COST_HEADER)?;
    let latency: Vec<LatencyRow> = read_csv_file(&dir.join(LATENCY_CDF), &LATENCY_HEADER)?;
    let minutes: Vec<MinuteRow> = read_csv_file(&dir.join(REBALANCE_PER_MINUTE), &MINUTE_HEADER)?;
    if success.is_empty() {
        return Err(CliError::Input(format!("{}: no sweep points", dir.join(SUCCESS_VS_LIQUIDITY).display())));
    }

    let mut out = String::new();
    writeln!(out, "minimum liquidity for 100% success").unwrap();
    for mode in RebalancingMode::ALL {
        let rows: Vec<&SuccessRow> = success.iter().filter(|r| r.mode == mode).collect();
        if rows.is_empty() {
            continue;
        }
        let min = rows.iter().filter(|r| r.success_rate >= 1.0).map(|r| r.liquidity_cents).min();
        let best = rows.iter().map(|r| r.success_rate).fold(0.0, f64::max);
        let text = match min {
            Some(c) => format!("{} EUR", Money(c)),
            None => format!("not reached (best {:.2}%)", best * 100.0),
        };
        writeln!(out, "  {:<16}{text}", mode.as_str()).unwrap();
    }
    let text = match cost.iter().min_by_key(|r| (r.total_cost, r.liquidity_cents)) {
        Some(r) => format!(
            "{} EUR (total {} EUR/day: liquidity {}, swaps {})",
            Money(r.liquidity_cents),
            Money(r.total_cost),
            Money(r.liquidity_cost),
            Money(r.swap_cost)
        ),
        None => "none (no point at 100% success)".to_owned(),
    };
    writeln!(out, "cost minimum        {text}").unwrap();
    let text = match latency.last() {
        Some(r) => format!("{} ms", r.latency_ms),
        None => "no payments".to_owned(),
    };
    writeln!(out, "max latency         {text}").unwrap();
    let text = match minutes.iter().max_by_key(|r| (r.swaps, std::cmp::Reverse(r.minute))) {
        Some(r) => format!("{} per minute (minute {})", r.swaps, r.minute),
        None => "no swaps".to_owned(),
    };
    writeln!(out, "peak swap rate      {text}").unwrap();
    Ok(out)
}
