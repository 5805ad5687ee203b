//! Liquidity sweeps: the same load replayed over a grid of routing liquidity
//! levels and rebalancing modes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::engine::{run, RebalancingMode, SimConfig};
use crate::loadgen::{LoadProfile, ScenarioTable};
use crate::metrics::MetricsLog;
use crate::topology::Topology;
use crate::units::Money;
use crate::SimError;

/// Mantissas of the sweep grid within one decade.
pub const GRID_STEPS: [u64; 7] = [10, 15, 20, 30, 40, 60, 80];

/// Log-spaced grid over `[min, max]` on the 1-1.5-2-3-4-6-8 series.
pub fn log_grid(min: Money, max: Money) -> Vec<Money> {
    let mut out = Vec::new();
    let mut decade = 1u64;
    while decade.saturating_mul(10) <= max.0 {
        out.extend(GRID_STEPS.iter().map(|&m| decade * m).filter(|v| (min.0..=max.0).contains(v)).map(Money));
        decade *= 10;
    }
    out
}

/// Spreads `total` evenly over every LSP–LSP and CB–LSP channel.
pub fn with_total_routing_liquidity(base: &Topology, total: Money) -> Topology {
    let n = base.routing_channels().count().max(1) as u64;
    let c = Money(total.0 / n);
    base.with_routing_capacities(c, c)
}

/// How each point of a sweep is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seeding {
    /// Every point replays the same load (`config.seed`).
    Shared,
    /// Point `i` of the liquidity list uses `config.seed + i`; the modes of
    /// one point share a seed.
    PerPoint,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub mode: RebalancingMode,
    /// Nominal total routing liquidity of the point.
    pub liquidity: Money,
    pub seed: u64,
    pub log: MetricsLog,
}

/// Number of worker threads: `SHPCN_THREADS` if set, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var("SHPCN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every (mode, liquidity) pair. Results come back in input order,
/// modes outermost, whatever the thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    base: &Topology,
    liquidities: &[Money],
    modes: &[RebalancingMode],
    profile: &LoadProfile,
    table: &ScenarioTable,
    config: &SimConfig,
    seeding: Seeding,
    threads: usize,
) -> Result<Vec<SweepRun>, SweepError> {
    let seed_of = |i: usize| match seeding {
        Seeding::Shared => config.seed,
        Seeding::PerPoint => config.seed.wrapping_add(i as u64),
    };
    let jobs: Vec<(RebalancingMode, Money, u64)> = modes
        .iter()
        .flat_map(|&m| liquidities.iter().enumerate().map(move |(i, &l)| (m, l, i)))
        .map(|(m, l, i)| (m, l, seed_of(i)))
        .collect();
    let results: Mutex<Vec<Option<Result<MetricsLog, SimError>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(mode, liquidity, seed)) = jobs.get(i) else { break };
        let t = with_total_routing_liquidity(base, liquidity);
        let cfg = SimConfig { rebalancing: mode, seed, ..config.clone() };
        let r = run(&t, profile, table, &cfg);
        results.lock().unwrap()[i] = Some(r);
    };
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let results = results.into_inner().unwrap();
    jobs.into_iter()
        .zip(results)
        .map(|((mode, liquidity, seed), r)| match r.expect("every job ran") {
            Ok(log) => Ok(SweepRun { mode, liquidity, seed, log }),
            Err(source) => Err(SweepError { mode, liquidity, source }),
        })
        .collect()
}

/// A sweep point that failed, identified by mode and liquidity.
#[derive(Debug, Error)]
#[error("{mode} run at {} cents failed: {source}", .liquidity.0)]
pub struct SweepError {
    pub mode: RebalancingMode,
    pub liquidity: Money,
    #[source]
    pub source: SimError,
}
