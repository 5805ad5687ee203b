//! Engine properties on random small networks under concurrent load, in every
//! rebalancing mode.

mod common;

use common::{build, req, small_network, diagram_violation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shpcn_core::engine::payment::{PaymentKind, PaymentStatus};
use shpcn_core::engine::{run_requests, InvariantChecks, RunOutput};
use shpcn_core::loadgen::PaymentRequest;
use shpcn_core::metrics::{latency_rows, minute_rows, write_csv};
use shpcn_core::rebalancer::{RebalanceKind, RebalanceOutcome};
use shpcn_core::topology::{Role, Topology};
use shpcn_core::{RebalancingMode, SimConfig};

fn mode_strategy() -> impl Strategy<Value = RebalancingMode> {
    prop::sample::select(RebalancingMode::ALL.to_vec())
}

/// Requests arriving close together so that payments overlap in flight.
fn busy_requests(t: &Topology, n: usize, seed: u64) -> Vec<PaymentRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eus: Vec<u32> = t.nodes.iter().filter(|n| n.role.is_end_user()).map(|n| n.id.0).collect();
    let mut at = 0;
    (0..n)
        .map(|i| {
            at += rng.gen_range(0..400);
            let s = eus[rng.gen_range(0..eus.len())];
            let r = *eus.iter().filter(|&&e| e != s).nth(rng.gen_range(0..eus.len() - 1)).unwrap();
            req(i as u64, at, s, r, rng.gen_range(1..=150))
        })
        .collect()
}

fn config(mode: RebalancingMode) -> SimConfig {
    SimConfig {
        rebalancing: mode,
        invariant_checks: InvariantChecks::Full,
        min_wallet: shpcn_core::Money(20),
        ..SimConfig::default()
    }
}

fn csv_bytes(out: &RunOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, &latency_rows(&out.log, 100)).unwrap();
    write_csv(&mut buf, &minute_rows(&out.log)).unwrap();
    buf.extend(serde_json::to_vec(&out.log.payments).unwrap());
    buf.extend(serde_json::to_vec(&out.log.actions).unwrap());
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The engine checks conservation on every channel after every event and
    /// errors out on a breach, so a clean run is the property.
    #[test]
    fn conservation_caps_and_deadlines(topo in any::<u64>(), seed in any::<u64>(), n in 1usize..40, mode in mode_strategy()) {
        let t = small_network(topo);
        let reqs = busy_requests(&t, n, seed);
        let out = run_requests(&t, reqs, &config(mode), false).unwrap();
        for (before, after) in t.channels.iter().zip(&out.final_topology.channels) {
            prop_assert_eq!(after.balance_a + after.balance_b, before.capacity);
            prop_assert!(after.locked.is_zero());
        }
        prop_assert_eq!(out.log.retail().count(), n);
        for r in out.log.retail() {
            prop_assert!(matches!(r.status, PaymentStatus::Succeeded | PaymentStatus::Failed(_)));
            if r.status == PaymentStatus::Succeeded {
                prop_assert!(r.latency_us().unwrap() <= 10_000_000);
            }
        }
        // Custodian accounts move only through deposits and withdrawals.
        let moved: i64 = out.cs_accounts.iter().sum();
        let dep: i64 = out.log.payments.iter().filter(|p| p.kind == PaymentKind::Deposit && p.status == PaymentStatus::Succeeded).map(|p| p.amount.0 as i64).sum();
        let wd: i64 = out.log.payments.iter().filter(|p| p.kind == PaymentKind::Withdrawal && p.status == PaymentStatus::Succeeded).map(|p| p.amount.0 as i64).sum();
        prop_assert_eq!(moved, dep - wd);
    }

    #[test]
    fn lifecycle_follows_event_diagram(topo in any::<u64>(), seed in any::<u64>(), n in 1usize..40, mode in mode_strategy()) {
        let t = small_network(topo);
        let out = run_requests(&t, busy_requests(&t, n, seed), &config(mode), true).unwrap();
        prop_assert_eq!(diagram_violation(&out.trace), None);
    }

    #[test]
    fn replay_is_byte_identical(topo in any::<u64>(), seed in any::<u64>(), n in 1usize..40, mode in mode_strategy()) {
        let t = small_network(topo);
        let a = run_requests(&t, busy_requests(&t, n, seed), &config(mode), false).unwrap();
        let b = run_requests(&t, busy_requests(&t, n, seed), &config(mode), false).unwrap();
        prop_assert_eq!(csv_bytes(&a), csv_bytes(&b));
        prop_assert_eq!(a.final_topology, b.final_topology);
    }

    /// One payment pushes the L1–L2 channel past the threshold. With swaps on,
    /// only that channel ends up different, by exactly the swapped amount.
    #[test]
    fn swap_neutrality(cap in 10u64..2_000, l2_share in 0.0f64..1.0, amount in 1u64..1_000) {
        let l2 = (cap as f64 * l2_share) as u64;
        let t = build(
            &[Role::CentralBank, Role::Lsp, Role::Lsp, Role::Citizen, Role::Citizen],
            &[(0, 1, 1, 0), (0, 2, 1, 0), (1, 2, cap, cap - l2), (1, 3, 3_000, 1_500), (2, 4, 3_000, 1_500)],
        );
        let p = vec![req(0, 0, 3, 4, amount)];
        let cfg = |mode| SimConfig { rebalancing: mode, invariant_checks: InvariantChecks::Full, ..SimConfig::default() };
        let with = run_requests(&t, p.clone(), &cfg(RebalancingMode::Full), false).unwrap();
        let without = run_requests(&t, p, &cfg(RebalancingMode::WaterfallOnly), false).unwrap();
        let swaps: Vec<_> = with.log.actions.iter().filter(|a| a.kind == RebalanceKind::SubmarineSwap).collect();
        for (i, (x, y)) in with.final_topology.channels.iter().zip(&without.final_topology.channels).enumerate() {
            if i != 2 {
                prop_assert_eq!(x, y);
            }
        }
        let (x, y) = (&with.final_topology.channels[2], &without.final_topology.channels[2]);
        prop_assert_eq!(x.balance_a + x.balance_b, y.balance_a + y.balance_b);
        match swaps.as_slice() {
            [] => prop_assert_eq!(x, y),
            [s] => {
                prop_assert_eq!(s.outcome, RebalanceOutcome::Completed);
                prop_assert_eq!(x.balance_a, y.balance_a + s.amount);
                prop_assert_eq!(x.balance_b + s.amount, y.balance_b);
                prop_assert_eq!(with.log.l1_txs.len(), 2);
            }
            _ => prop_assert!(false, "more than one swap"),
        }
        if with.log.retail().all(|r| r.status == PaymentStatus::Succeeded) && amount <= cap {
            // L2 received the payment and re-centred if it crossed 80%.
            let projected = l2 + amount;
            prop_assert_eq!(swaps.len() == 1, projected * 5 > cap * 4);
        }
    }
}

#[test]
fn swap_recentres_crossed_channel() {
    let t = build(
        &[Role::CentralBank, Role::Lsp, Role::Lsp, Role::Citizen, Role::Citizen],
        &[(0, 1, 1, 0), (0, 2, 1, 0), (1, 2, 1_000, 300), (1, 3, 3_000, 1_500), (2, 4, 3_000, 1_500)],
    );
    let cfg = SimConfig { rebalancing: RebalancingMode::Full, ..SimConfig::default() };
    let out = run_requests(&t, vec![req(0, 0, 3, 4, 200)], &cfg, false).unwrap();
    // L2 would hold 900 > 800: it swaps 400 back to L1.
    let c = &out.final_topology.channels[2];
    assert_eq!((c.balance_a.0, c.balance_b.0), (500, 500));
    assert_eq!(out.log.count_actions(RebalanceKind::SubmarineSwap, RebalanceOutcome::Completed), 1);
}
