//! Browser bindings: the rebalancing formulas, a small simulation and a
//! small cost sweep. Every export takes euros and returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use shpcn_core::loadgen::{ArrivalProcess, LoadProfile, LoadSegment, ScenarioTable};
use shpcn_core::metrics::{
    latency_rows, minute_rows, summarize_rows, sweep_row, CostModel, LatencyRow, MinuteRow, SweepRow,
};
use shpcn_core::rebalancer::{plan_withdrawal, reverse_trigger, swap_amount, swap_needed, waterfall_deposit_amount, waterfall_trigger};
use shpcn_core::sweep::{log_grid, run_sweep, with_total_routing_liquidity, Seeding};
use shpcn_core::topology::{generate_topology, scaled_europe_params, Topology};
use shpcn_core::{run, Money, RebalancingMode, SimConfig, SimTime};

fn cents(eur: f64) -> Result<Money, String> {
    if (0.0..1e15).contains(&eur) {
        Ok(Money((eur * 100.0).round() as u64))
    } else {
        Err(format!("{eur} is not a valid amount"))
    }
}

fn eur(m: Money) -> f64 {
    m.0 as f64 / 100.0
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("plain data serializes")).map_err(|e| JsError::new(&e))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Formulas {
    pub waterfall: bool,
    pub deposit: f64,
    pub reverse_waterfall: bool,
    /// `None` when the payment cannot fit in the wallet at all.
    pub withdrawal: Option<f64>,
    pub swap: bool,
    pub swap_amount: f64,
}

/// Incoming and outgoing wallet payment of `payment` against a wallet of
/// `cap` holding `balance`, and a routing channel of `capacity` whose side
/// holds `channel_balance`.
#[allow(clippy::too_many_arguments)]
pub fn formulas(
    cap: f64,
    balance: f64,
    payment: f64,
    min_deposit: f64,
    min_wallet: f64,
    capacity: f64,
    channel_balance: f64,
    threshold: f64,
) -> Result<Formulas, String> {
    let (cap, balance, payment) = (cents(cap)?, cents(balance)?, cents(payment)?);
    let (capacity, channel_balance) = (cents(capacity)?, cents(channel_balance)?);
    if balance > cap || channel_balance > capacity {
        return Err("a balance cannot exceed its capacity".into());
    }
    if !(threshold > 0.5 && threshold <= 1.0) {
        return Err("the swap threshold must lie in (0.5, 1]".into());
    }
    let waterfall = waterfall_trigger(balance, payment, cap);
    let reverse = reverse_trigger(balance, payment);
    let swap = swap_needed(channel_balance, capacity, threshold);
    Ok(Formulas {
        waterfall,
        deposit: if waterfall { eur(waterfall_deposit_amount(balance, payment, cap, cents(min_deposit)?)) } else { 0.0 },
        reverse_waterfall: reverse,
        withdrawal: if reverse { plan_withdrawal(balance, payment, cap, cents(min_wallet)?).ok().map(eur) } else { Some(0.0) },
        swap,
        swap_amount: if swap { eur(swap_amount(channel_balance, capacity)) } else { 0.0 },
    })
}

#[wasm_bindgen(js_name = formulas)]
#[allow(clippy::too_many_arguments)]
pub fn formulas_js(
    cap: f64,
    balance: f64,
    payment: f64,
    min_deposit: f64,
    min_wallet: f64,
    capacity: f64,
    channel_balance: f64,
    threshold: f64,
) -> Result<String, JsError> {
    to_js(formulas(cap, balance, payment, min_deposit, min_wallet, capacity, channel_balance, threshold))
}

/// The scaled-Europe layout shrunk to `citizens` citizens, keeping 30 LSPs
/// and one merchant per 100 citizens.
pub fn small_topology(citizens: u32, seed: u64) -> Result<Topology, String> {
    if !(10_000..=100_000).contains(&citizens) {
        return Err("citizens must lie between 10000 and 100000".into());
    }
    let mut p = scaled_europe_params(Money::ZERO, Money::ZERO);
    p.total_citizens = citizens as u64;
    p.citizens_per_lsp = (citizens as u64 / 30).max(1);
    p.seed = seed;
    generate_topology(&p).map_err(|e| e.to_string())
}

fn profile(minutes: u32, rate: f64) -> Result<LoadProfile, String> {
    if !(1..=1440).contains(&minutes) {
        return Err("minutes must lie between 1 and 1440".into());
    }
    let end = SimTime::from_secs(minutes as u64 * 60);
    LoadProfile::new(vec![LoadSegment { start: SimTime::ZERO, end, rate }], ArrivalProcess::Poisson).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct SimulationView {
    pub payments: usize,
    pub success_rate: f64,
    pub cdf: Vec<LatencyRow>,
    pub per_minute: Vec<MinuteRow>,
}

/// One run on a small network with `liquidity` euros spread over the routing channels.
pub fn simulate(citizens: u32, liquidity: f64, mode: &str, minutes: u32, rate: f64, seed: u64) -> Result<SimulationView, String> {
    let mode: RebalancingMode = mode.parse()?;
    let base = small_topology(citizens, seed)?;
    let t = with_total_routing_liquidity(&base, cents(liquidity)?);
    let config = SimConfig { rebalancing: mode, seed, ..SimConfig::default() };
    let log = run(&t, &profile(minutes, rate)?, &ScenarioTable::default(), &config).map_err(|e| e.to_string())?;
    let row = sweep_row(Money::ZERO, &log, &CostModel::default());
    Ok(SimulationView {
        payments: log.retail().count(),
        success_rate: row.success_rate,
        cdf: latency_rows(&log, config.hop_delay_ms),
        per_minute: minute_rows(&log),
    })
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(citizens: u32, liquidity: f64, mode: &str, minutes: u32, rate: f64, seed: u64) -> Result<String, JsError> {
    to_js(simulate(citizens, liquidity, mode, minutes, rate, seed))
}

#[derive(Debug, Serialize)]
pub struct CostPoint {
    pub liquidity: f64,
    pub success_rate: f64,
    pub liquidity_cost: f64,
    pub swap_cost: f64,
    pub total_cost: f64,
}

#[derive(Debug, Serialize)]
pub struct CostView {
    pub points: Vec<CostPoint>,
    pub cost_minimum: Option<f64>,
    pub min_full_success: Option<f64>,
}

/// Full-rebalancing sweep over the log grid in `[from, to]` euros. Costs
/// cover the simulated window only.
pub fn cost_curve(citizens: u32, minutes: u32, rate: f64, seed: u64, from: f64, to: f64) -> Result<CostView, String> {
    let base = small_topology(citizens, seed)?;
    let grid = log_grid(cents(from)?, cents(to)?);
    if grid.is_empty() || grid.len() > 30 {
        return Err("the range must hold between 1 and 30 grid points".into());
    }
    let config = SimConfig { seed, ..SimConfig::default() };
    let runs = run_sweep(&base, &grid, &[RebalancingMode::Full], &profile(minutes, rate)?, &ScenarioTable::default(), &config, Seeding::PerPoint, 1)
        .map_err(|e| e.to_string())?;
    let model = CostModel { horizon_days: minutes as f64 / 1440.0, ..CostModel::default() };
    let summary = summarize_rows(runs.iter().map(|r| sweep_row(r.liquidity, &r.log, &model)).collect());
    let point = |r: &SweepRow| CostPoint {
        liquidity: eur(r.liquidity),
        success_rate: r.success_rate,
        liquidity_cost: eur(r.liquidity_cost),
        swap_cost: eur(r.swap_cost),
        total_cost: eur(r.total_cost),
    };
    Ok(CostView {
        points: summary.rows.iter().map(point).collect(),
        cost_minimum: summary.cost_minimum.map(eur),
        min_full_success: summary.min_full_success.map(eur),
    })
}

#[wasm_bindgen(js_name = costCurve)]
pub fn cost_curve_js(citizens: u32, minutes: u32, rate: f64, seed: u64, from: f64, to: f64) -> Result<String, JsError> {
    to_js(cost_curve(citizens, minutes, rate, seed, from, to))
}
