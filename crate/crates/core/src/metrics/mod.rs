//! Aggregation of run logs: success rate, latency CDF, per-minute rebalancing
//! series and the liquidity/swap cost model.

mod csv_io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::payment::{PaymentId, PaymentKind, PaymentStatus};
use crate::engine::SimConfig;
use crate::rebalancer::{RebalanceAction, RebalanceKind, RebalanceOutcome};
use crate::units::{Money, SimTime};

pub use csv_io::*;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("a sweep needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("{file}: {message}")]
    BadFile { file: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRecord {
    pub id: PaymentId,
    pub kind: PaymentKind,
    pub amount: Money,
    pub created_at: SimTime,
    pub completed_at: Option<SimTime>,
    pub status: PaymentStatus,
    pub attempts: u16,
    pub route_len: u16,
}

impl PaymentRecord {
    /// Creation to completion, for succeeded payments.
    pub fn latency_us(&self) -> Option<u64> {
        match (self.status, self.completed_at) {
            (PaymentStatus::Succeeded, Some(t)) => Some(t.0 - self.created_at.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    /// Sorted by payment id.
    pub payments: Vec<PaymentRecord>,
    pub actions: Vec<RebalanceAction>,
    /// Layer-1 transaction times, sorted.
    pub l1_txs: Vec<SimTime>,
    /// Swaps wanted but refused by the layer-1 rate limit.
    pub deferred_swaps: Vec<SimTime>,
    pub config: SimConfig,
    pub routing_liquidity: Money,
    /// End of the load profile.
    pub horizon: SimTime,
}

impl MetricsLog {
    pub fn new(config: SimConfig, routing_liquidity: Money) -> Self {
        MetricsLog {
            payments: Vec::new(),
            actions: Vec::new(),
            l1_txs: Vec::new(),
            deferred_swaps: Vec::new(),
            config,
            routing_liquidity,
            horizon: SimTime::ZERO,
        }
    }

    pub fn retail(&self) -> impl Iterator<Item = &PaymentRecord> {
        self.payments.iter().filter(|p| p.kind == PaymentKind::Retail)
    }

    pub fn count_actions(&self, kind: RebalanceKind, outcome: RebalanceOutcome) -> usize {
        self.actions.iter().filter(|a| a.kind == kind && a.outcome == outcome).count()
    }
}

/// Succeeded / total among payments of `kind`; `None` when there are none.
pub fn success_rate(log: &MetricsLog, kind: PaymentKind) -> Option<f64> {
    let (mut ok, mut total) = (0u64, 0u64);
    for p in log.payments.iter().filter(|p| p.kind == kind) {
        total += 1;
        ok += u64::from(p.status == PaymentStatus::Succeeded);
    }
    (total > 0).then(|| ok as f64 / total as f64)
}

/// Fraction of all retail payments that succeeded within each latency, at
/// `resolution_ms` steps from 0 up to the slowest success. The last point
/// equals the success rate.
pub fn completion_cdf(log: &MetricsLog, resolution_ms: u64) -> Vec<(u64, f64)> {
    assert!(resolution_ms > 0, "resolution must be positive");
    let total = log.retail().count();
    if total == 0 {
        return Vec::new();
    }
    let step_us = resolution_ms * 1000;
    let mut buckets: Vec<u64> = Vec::new();
    for lat in log.retail().filter_map(PaymentRecord::latency_us) {
        let b = lat.div_ceil(step_us) as usize;
        if buckets.len() <= b {
            buckets.resize(b + 1, 0);
        }
        buckets[b] += 1;
    }
    if buckets.is_empty() {
        buckets.push(0);
    }
    let mut acc = 0;
    buckets
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            acc += n;
            (i as u64 * resolution_ms, acc as f64 / total as f64)
        })
        .collect()
}

/// Completed actions of `kind` per initiation minute, one entry for every
/// minute of the run.
pub fn per_minute_series(log: &MetricsLog, kind: RebalanceKind) -> Vec<(u64, u64)> {
    let mut counts = vec![0u64; log.horizon.0.div_ceil(60_000_000) as usize];
    for a in log.actions.iter().filter(|a| a.kind == kind && a.outcome == RebalanceOutcome::Completed) {
        let m = a.initiated_at.minute() as usize;
        if counts.len() <= m {
            counts.resize(m + 1, 0);
        }
        counts[m] += 1;
    }
    counts.into_iter().enumerate().map(|(m, c)| (m as u64, c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub annual_lending_rate: f64,
    pub l1_fee_per_tx: Money,
    pub horizon_days: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { annual_lending_rate: 0.0475, l1_fee_per_tx: Money(10), horizon_days: 1.0 }
    }
}

/// Interest forgone on `liquidity` over the model's horizon, rounded to the cent.
pub fn liquidity_cost_per_day(liquidity: Money, model: &CostModel) -> Money {
    Money((liquidity.0 as f64 * model.annual_lending_rate / 365.0 * model.horizon_days).round() as u64)
}

pub fn swap_cost(log: &MetricsLog, model: &CostModel) -> Money {
    Money(log.l1_txs.len() as u64 * model.l1_fee_per_tx.0)
}

pub fn total_cost(liquidity: Money, log: &MetricsLog, model: &CostModel) -> Money {
    liquidity_cost_per_day(liquidity, model) + swap_cost(log, model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub liquidity: Money,
    pub success_rate: f64,
    pub swaps: u64,
    pub l1_txs: u64,
    pub liquidity_cost: Money,
    pub swap_cost: Money,
    pub total_cost: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Ascending by liquidity.
    pub rows: Vec<SweepRow>,
    /// Liquidity with the lowest total cost among the points where every
    /// retail payment succeeded.
    pub cost_minimum: Option<Money>,
    /// Smallest liquidity at which every retail payment succeeded.
    pub min_full_success: Option<Money>,
}

/// One sweep row for a single run.
pub fn sweep_row(liquidity: Money, log: &MetricsLog, model: &CostModel) -> SweepRow {
    let liquidity_cost = liquidity_cost_per_day(liquidity, model);
    let swap_cost = swap_cost(log, model);
    SweepRow {
        liquidity,
        success_rate: success_rate(log, PaymentKind::Retail).unwrap_or(0.0),
        swaps: log.count_actions(RebalanceKind::SubmarineSwap, RebalanceOutcome::Completed) as u64,
        l1_txs: log.l1_txs.len() as u64,
        liquidity_cost,
        swap_cost,
        total_cost: liquidity_cost + swap_cost,
    }
}

pub fn sweep_summary(runs: &[(Money, &MetricsLog)], model: &CostModel) -> Result<SweepSummary, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    Ok(summarize_rows(runs.iter().map(|&(l, log)| sweep_row(l, log, model)).collect()))
}

impl SweepSummary {
    /// Rows where every retail payment succeeded. A network that drops
    /// payments is not a candidate operating point, so costs are compared
    /// only here.
    pub fn cost_curve(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.success_rate >= 1.0)
    }
}

/// Derives the argmin and the 100% point from already computed rows.
pub fn summarize_rows(mut rows: Vec<SweepRow>) -> SweepSummary {
    rows.sort_by_key(|r| r.liquidity);
    let min_full_success = rows.iter().find(|r| r.success_rate >= 1.0).map(|r| r.liquidity);
    let mut s = SweepSummary { rows, cost_minimum: None, min_full_success };
    s.cost_minimum = s.cost_curve().min_by_key(|r| (r.total_cost, r.liquidity)).map(|r| r.liquidity);
    s
}

/// Number of local minima of a sequence, counting plateaus once.
pub fn local_minima(values: &[u64]) -> usize {
    let mut v: Vec<u64> = values.to_vec();
    v.dedup();
    (0..v.len())
        .filter(|&i| (i == 0 || v[i - 1] > v[i]) && (i + 1 == v.len() || v[i + 1] > v[i]))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{ChannelId, NodeId};

    fn rec(id: u32, created_ms: u64, done_ms: Option<u64>) -> PaymentRecord {
        PaymentRecord {
            id: PaymentId(id),
            kind: PaymentKind::Retail,
            amount: Money(100),
            created_at: SimTime::from_millis(created_ms),
            completed_at: done_ms.map(SimTime::from_millis),
            status: if done_ms.is_some() {
                PaymentStatus::Succeeded
            } else {
                PaymentStatus::Failed(crate::engine::payment::FailReason::NoRoute)
            },
            attempts: 1,
            route_len: 2,
        }
    }

    fn log_with(payments: Vec<PaymentRecord>) -> MetricsLog {
        let mut l = MetricsLog::new(SimConfig::default(), Money::ZERO);
        l.payments = payments;
        l
    }

    fn action(kind: RebalanceKind, at_s: u64) -> RebalanceAction {
        RebalanceAction {
            kind,
            actor: NodeId(1),
            channel: ChannelId(0),
            amount: Money(1),
            initiated_at: SimTime::from_secs(at_s),
            completed_at: SimTime::from_secs(at_s + 1),
            outcome: RebalanceOutcome::Completed,
        }
    }

    #[test]
    fn success_rate_cases() {
        assert_eq!(success_rate(&log_with(vec![]), PaymentKind::Retail), None);
        assert_eq!(success_rate(&log_with(vec![rec(0, 0, Some(1)), rec(1, 0, Some(5))]), PaymentKind::Retail), Some(1.0));
        assert_eq!(success_rate(&log_with(vec![rec(0, 0, Some(1)), rec(1, 0, None)]), PaymentKind::Retail), Some(0.5));
    }

    #[test]
    fn cdf_single_two_hop_payment() {
        let cdf = completion_cdf(&log_with(vec![rec(0, 1000, Some(1400))]), 100);
        assert_eq!(cdf.len(), 5);
        assert!(cdf[..4].iter().all(|&(_, f)| f == 0.0));
        assert_eq!(cdf[4], (400, 1.0));
    }

    #[test]
    fn cdf_ends_at_success_rate() {
        let log = log_with(vec![rec(0, 0, Some(250)), rec(1, 0, None), rec(2, 0, Some(900)), rec(3, 0, Some(100))]);
        let cdf = completion_cdf(&log, 100);
        assert!(cdf.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(cdf.last().unwrap().1, success_rate(&log, PaymentKind::Retail).unwrap());
        assert_eq!(cdf[1], (100, 0.25));
        assert_eq!(cdf[3], (300, 0.5));
    }

    #[test]
    fn per_minute_buckets_by_initiation() {
        let mut log = log_with(vec![]);
        log.horizon = SimTime::from_secs(180);
        log.actions = vec![
            action(RebalanceKind::WaterfallDeposit, 5),
            action(RebalanceKind::WaterfallDeposit, 59),
            action(RebalanceKind::WaterfallDeposit, 61),
            action(RebalanceKind::SubmarineSwap, 61),
        ];
        let s = per_minute_series(&log, RebalanceKind::WaterfallDeposit);
        assert_eq!(s, vec![(0, 2), (1, 1), (2, 0)]);
        assert_eq!(s.iter().map(|x| x.1).sum::<u64>(), 3);
        log.actions.clear();
        assert!(per_minute_series(&log, RebalanceKind::SubmarineSwap).iter().all(|x| x.1 == 0));
    }

    #[test]
    fn cost_arithmetic() {
        let m = CostModel::default();
        // 800k units at 4.75 %/yr: 800000 * 0.0475 / 365 = 104.1096 units.
        assert_eq!(liquidity_cost_per_day(Money::euros(800_000), &m), Money(10_411));
        let mut log = log_with(vec![]);
        assert_eq!(swap_cost(&log, &m), Money::ZERO);
        log.l1_txs = vec![SimTime::ZERO; 7];
        assert_eq!(swap_cost(&log, &m), Money(70));
        assert_eq!(total_cost(Money::euros(800_000), &log, &m), Money(10_481));
    }

    #[test]
    fn sweep_needs_two_runs() {
        let log = log_with(vec![rec(0, 0, Some(1))]);
        assert!(matches!(sweep_summary(&[(Money(1), &log)], &CostModel::default()), Err(MetricsError::TooFewRuns(1))));
        let mut cheap = log.clone();
        cheap.l1_txs = vec![SimTime::ZERO; 100];
        let failing = log_with(vec![rec(0, 0, None)]);
        let s = sweep_summary(
            &[(Money::euros(2_000_000), &log), (Money::euros(10), &failing), (Money::euros(100_000), &cheap)],
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(s.rows.iter().map(|r| r.liquidity).collect::<Vec<_>>(), vec![
            Money::euros(10),
            Money::euros(100_000),
            Money::euros(2_000_000)
        ]);
        assert_eq!(s.min_full_success, Some(Money::euros(100_000)));
        // The failing 10-unit point is cheaper but not a candidate.
        assert_eq!(s.cost_minimum, Some(Money::euros(100_000)));
        assert_eq!(s.cost_curve().count(), 2);
    }

    #[test]
    fn minima_count() {
        assert_eq!(local_minima(&[5, 3, 2, 4, 9]), 1);
        assert_eq!(local_minima(&[5, 3, 3, 4]), 1);
        assert_eq!(local_minima(&[5, 3, 4, 2, 6]), 2);
        assert_eq!(local_minima(&[1, 2, 3]), 1);
    }
}
