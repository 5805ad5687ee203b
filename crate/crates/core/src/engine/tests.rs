use super::*;
use crate::loadgen::{build_profile, ArrivalProcess, ProfileKind, Scenario};
use crate::rebalancer::{RebalanceKind, RebalanceOutcome};
use crate::topology::{Channel, Node, Role};

use Role::*;

/// Nodes all in country 0; channels as (a, b, capacity, balance_a).
fn build(roles: &[Role], chans: &[(u32, u32, u64, u64)]) -> Topology {
    Topology {
        nodes: roles
            .iter()
            .enumerate()
            .map(|(i, &r)| Node { id: NodeId(i as u32), tier: r.tier(), role: r, country: 0 })
            .collect(),
        channels: chans
            .iter()
            .enumerate()
            .map(|(i, &(a, b, cap, ba))| Channel {
                id: ChannelId(i as u32),
                a: NodeId(a),
                b: NodeId(b),
                capacity: Money(cap),
                balance_a: Money(ba),
                balance_b: Money(cap - ba),
                locked: Money::ZERO,
            })
            .collect(),
        params: None,
    }
}

fn req(id: u64, at_ms: u64, sender: u32, receiver: u32, amount: u64) -> PaymentRequest {
    PaymentRequest {
        id,
        sender: NodeId(sender),
        receiver: NodeId(receiver),
        amount: Money(amount),
        scenario: Scenario::Pos,
        cross_border: false,
        created_at: SimTime::from_millis(at_ms),
    }
}

fn cfg(mode: RebalancingMode) -> SimConfig {
    SimConfig { rebalancing: mode, invariant_checks: InvariantChecks::Full, ..SimConfig::default() }
}

fn balances(t: &Topology) -> Vec<(u64, u64)> {
    t.channels.iter().map(|c| (c.balance_a.0, c.balance_b.0)).collect()
}

fn retail(out: &RunOutput) -> Vec<&PaymentRecord> {
    out.log.retail().collect()
}

/// CB0 - L1, with citizen 2 and merchant 3 on L1.
fn star() -> Topology {
    build(&[CentralBank, Lsp, Citizen, Merchant(crate::topology::MerchantSize::S)], &[
        (0, 1, 10_000, 5_000),
        (1, 2, 3_000, 1_500),
        (1, 3, 1_000, 1_000),
    ])
}

/// CB0 linked to L1 and L2, L1 - L2 direct; citizen 3 on L1, merchant 4 on L2.
fn line(cb_cap: u64, l1_l2: (u64, u64)) -> Topology {
    build(&[CentralBank, Lsp, Lsp, Citizen, Merchant(crate::topology::MerchantSize::S)], &[
        (0, 1, cb_cap, cb_cap / 2),
        (0, 2, cb_cap, cb_cap / 2),
        (1, 2, l1_l2.0, l1_l2.1),
        (1, 3, 3_000, 1_500),
        (2, 4, 5_000, 5_000),
    ])
}

#[test]
fn two_hop_payment_lifecycle() {
    let t = star();
    let out = run_requests(&t, vec![req(0, 1000, 2, 3, 100)], &cfg(RebalancingMode::None), true).unwrap();
    let r = retail(&out);
    assert_eq!(r[0].status, PaymentStatus::Succeeded);
    assert_eq!(r[0].completed_at, Some(SimTime::from_millis(1400)));
    assert_eq!(balances(&out.final_topology)[1], (1_600, 1_400));
    assert_eq!(balances(&out.final_topology)[2], (900, 100));
    let kinds: Vec<(EventKind, u16, u64)> = out.trace.iter().map(|e| (e.kind, e.hop, e.time.0 / 1000)).collect();
    use EventKind::*;
    assert_eq!(kinds, vec![
        (GeneratePayment, 0, 1000),
        (FindPath, 0, 1000),
        (SendPayment, 0, 1000),
        (ForwardPayment, 1, 1100),
        (ReceivePayment, 2, 1200),
        (ForwardSuccess, 1, 1300),
        (ReceiveSuccess, 0, 1400),
    ]);
}

#[test]
fn three_hop_completes_after_six_hop_delays() {
    let t = line(10, (1_000, 500));
    let out = run_requests(&t, vec![req(0, 0, 3, 4, 200)], &cfg(RebalancingMode::None), false).unwrap();
    let r = retail(&out);
    assert_eq!(r[0].route_len, 3);
    assert_eq!(r[0].latency_us(), Some(600_000));
}

#[test]
fn middle_hop_failure_unwinds_to_initial_balances() {
    // L1 has nothing on its side of L1-L2 and the CB channels are too small.
    let t = line(10, (1_000, 0));
    let out = run_requests(&t, vec![req(0, 0, 3, 4, 200)], &cfg(RebalancingMode::None), true).unwrap();
    let r = retail(&out);
    assert_eq!(r[0].status, PaymentStatus::Failed(FailReason::NoRoute));
    assert_eq!(r[0].attempts, 1);
    assert_eq!(balances(&out.final_topology), balances(&t));
    use EventKind::*;
    let kinds: Vec<(EventKind, u64)> = out.trace.iter().map(|e| (e.kind, e.time.0 / 1000)).collect();
    assert_eq!(kinds, vec![
        (GeneratePayment, 0),
        (FindPath, 0),
        (SendPayment, 0),
        (ForwardPayment, 100),
        (ReceiveFail, 200),
        (FindPath, 200),
    ]);
}

#[test]
fn retry_excludes_failed_hop_and_takes_detour() {
    // Direct L1-L2 is empty on L1's side; the CB detour has room.
    let t = line(10_000, (1_000, 0));
    let out = run_requests(&t, vec![req(0, 2000, 3, 4, 200)], &cfg(RebalancingMode::None), true).unwrap();
    let r = retail(&out);
    assert_eq!(r[0].status, PaymentStatus::Succeeded);
    assert_eq!(r[0].attempts, 2);
    assert_eq!(r[0].route_len, 4);
    // Failure at 2.1 s, unwind reaches the sender at 2.2 s and retries at once.
    let retry = out.trace.iter().filter(|e| e.kind == EventKind::FindPath).nth(1).unwrap();
    assert_eq!(retry.time, SimTime::from_millis(2200));
    assert_eq!(r[0].completed_at, Some(SimTime::from_millis(2200 + 800)));
}

#[test]
fn empty_load_leaves_balances() {
    let t = star();
    let out = run_requests(&t, vec![], &cfg(RebalancingMode::Full), false).unwrap();
    assert!(out.log.payments.is_empty() && out.log.actions.is_empty());
    assert_eq!(out.final_topology, t);
    let profile = LoadProfile::idle();
    let log = run(&t, &profile, &ScenarioTable::default(), &cfg(RebalancingMode::Full)).unwrap();
    assert!(log.payments.is_empty());
}

#[test]
fn time_going_backwards_is_an_error() {
    let t = star();
    let err = run_requests(&t, vec![req(0, 500, 2, 3, 1), req(1, 100, 2, 3, 1)], &cfg(RebalancingMode::None), false);
    assert!(matches!(err, Err(SimError::Invariant { .. })), "{err:?}");
}

#[test]
fn waterfall_deposits_excess_then_delivers() {
    // Merchant channel cap 1000 with 950 on the merchant side.
    let mut t = star();
    t.channels[2].balance_a = Money(50);
    t.channels[2].balance_b = Money(950);
    let out = run_requests(&t, vec![req(0, 0, 2, 3, 100)], &cfg(RebalancingMode::WaterfallOnly), true).unwrap();
    let r = retail(&out);
    assert_eq!(r[0].status, PaymentStatus::Succeeded);
    // Forward at 0.1 s holds, notify 0.2 s, deposit sent 0.5 s, lands 0.6 s,
    // receive 0.7 s, success back at 0.9 s.
    assert_eq!(r[0].latency_us(), Some(900_000));
    let dep = &out.log.actions[0];
    assert_eq!((dep.kind, dep.amount, dep.outcome), (RebalanceKind::WaterfallDeposit, Money(50), RebalanceOutcome::Completed));
    // Merchant: 950 - 50 + 100 = 1000, exactly the cap.
    assert_eq!(balances(&out.final_topology)[2], (0, 1000));
    assert_eq!(out.cs_accounts[3], 50);
    assert!(out.trace.iter().any(|e| e.kind == EventKind::NotifyPayment && e.payment == PaymentId(0)));
}

#[test]
fn waterfall_from_full_wallet_with_floor() {
    let mut t = star();
    t.channels[2].balance_a = Money(0);
    t.channels[2].balance_b = Money(1000);
    let mut c = cfg(RebalancingMode::WaterfallOnly);
    c.min_deposit = Money(300);
    let out = run_requests(&t, vec![req(0, 0, 2, 3, 100)], &c, false).unwrap();
    assert_eq!(retail(&out)[0].status, PaymentStatus::Succeeded);
    // D = max(P, L_D) = 300, then +100.
    assert_eq!(out.log.actions[0].amount, Money(300));
    assert_eq!(balances(&out.final_topology)[2], (200, 800));
}

#[test]
fn zero_waterfall_timeout_always_fails() {
    let mut t = star();
    t.channels[2].balance_a = Money(50);
    t.channels[2].balance_b = Money(950);
    let mut c = cfg(RebalancingMode::WaterfallOnly);
    c.waterfall_timeout_s = 0.0;
    let out = run_requests(&t, vec![req(0, 0, 2, 3, 100)], &c, false).unwrap();
    assert_eq!(retail(&out)[0].status, PaymentStatus::Failed(FailReason::WaterfallTimeout));
    assert_eq!(out.log.actions[0].outcome, RebalanceOutcome::Expired);
    // The deposit itself went through; the sender got its money back.
    assert_eq!(balances(&out.final_topology)[1], (1_500, 1_500));
    assert_eq!(balances(&out.final_topology)[2], (100, 900));
}

#[test]
fn reverse_waterfall_tops_up_to_reserve() {
    let mut t = star();
    t.channels[1].balance_a = Money(3_000);
    t.channels[1].balance_b = Money(0);
    let out = run_requests(&t, vec![req(0, 0, 2, 3, 500)], &cfg(RebalancingMode::WaterfallOnly), false).unwrap();
    // L_W = 50 euros = 5000 cents but the cap leaves room for 3000 only.
    let r = retail(&out);
    assert_eq!(r[0].status, PaymentStatus::Succeeded);
    assert_eq!(out.log.actions[0].amount, Money(3_000));

    let mut c = cfg(RebalancingMode::WaterfallOnly);
    c.min_wallet = Money(50);
    let out = run_requests(&t, vec![req(0, 0, 2, 3, 30)], &c, false).unwrap();
    assert_eq!(retail(&out)[0].status, PaymentStatus::Succeeded);
    assert_eq!(out.log.actions[0].kind, RebalanceKind::ReverseWithdrawal);
    assert_eq!(out.log.actions[0].amount, Money(50));
    // Citizen keeps 20 after paying 30.
    assert_eq!(balances(&out.final_topology)[1], (2_980, 20));
    assert_eq!(out.cs_accounts[2], -50);
    // Withdrawal sent at 0.3 s lands 0.4 s, then the 2-hop payment takes 0.4 s.
    assert_eq!(retail(&out)[0].latency_us(), Some(800_000));
}

#[test]
fn queued_payments_release_in_order() {
    let mut t = star();
    t.channels[1].balance_a = Money(3_000);
    t.channels[1].balance_b = Money(0);
    let mut c = cfg(RebalancingMode::WaterfallOnly);
    c.min_wallet = Money::ZERO;
    let out =
        run_requests(&t, vec![req(0, 0, 2, 3, 40), req(1, 50, 2, 3, 60)], &c, true).unwrap();
    let finds: Vec<PaymentId> = out
        .trace
        .iter()
        .filter(|e| e.kind == EventKind::FindPath && out.log.payments[e.payment.0 as usize].kind == PaymentKind::Retail)
        .map(|e| e.payment)
        .collect();
    // Each payment is checked once on creation, then released in FIFO order.
    let ids: Vec<PaymentId> = retail(&out).iter().map(|r| r.id).collect();
    assert_eq!(finds, [ids.clone(), ids].concat());
    assert!(retail(&out).iter().all(|r| r.status == PaymentStatus::Succeeded));
    assert_eq!(out.log.count_actions(RebalanceKind::ReverseWithdrawal, RebalanceOutcome::Completed), 2);
}

#[test]
fn payment_above_wallet_cap_is_refused() {
    let t = star();
    let out = run_requests(&t, vec![req(0, 0, 2, 3, 3_001)], &cfg(RebalancingMode::Full), false).unwrap();
    assert_eq!(retail(&out)[0].status, PaymentStatus::Failed(FailReason::CapExceeded));
    assert!(out.log.actions.is_empty());
}

#[test]
fn withdrawal_without_lsp_funds_fails() {
    // Citizen 2 holds 20 and its LSP 80; citizen 4 sends it 80 at t=0, which
    // locks the LSP side at 0.1 s. At 0.15 s citizen 2 wants to pay 50.
    let t = build(&[CentralBank, Lsp, Citizen, Merchant(crate::topology::MerchantSize::S), Citizen], &[
        (0, 1, 10_000, 5_000),
        (1, 2, 100, 80),
        (1, 3, 1_000, 1_000),
        (1, 4, 3_000, 1_500),
    ]);
    let mut c = cfg(RebalancingMode::Full);
    c.min_wallet = Money::ZERO;
    let out = run_requests(&t, vec![req(0, 0, 4, 2, 80), req(1, 150, 2, 3, 50)], &c, false).unwrap();
    let r = retail(&out);
    assert_eq!(r[0].status, PaymentStatus::Succeeded);
    assert_eq!(r[1].status, PaymentStatus::Failed(FailReason::ReverseWaterfallFailed));
    assert_eq!(balances(&out.final_topology)[1], (0, 100));
}

/// L1 - L2 channel of 1000 split (150, 850); citizen 3 on L1 pays merchant 4 on L2.
fn swap_fixture() -> Topology {
    line(10, (1_000, 150))
}

#[test]
fn swap_recenters_channel() {
    let t = swap_fixture();
    let out = run_requests(&t, vec![req(0, 0, 3, 4, 50)], &cfg(RebalancingMode::Full), true).unwrap();
    assert_eq!(retail(&out)[0].status, PaymentStatus::Succeeded);
    // After the payment L2 holds 900; the swap returns 400 off-chain.
    assert_eq!(balances(&out.final_topology)[2], (500, 500));
    assert_eq!(out.log.l1_txs.len(), 2);
    let swap = out.log.actions.iter().find(|a| a.kind == RebalanceKind::SubmarineSwap).unwrap();
    assert_eq!((swap.actor, swap.amount, swap.outcome), (NodeId(2), Money(400), RebalanceOutcome::Completed));
    // Lock on L1-L2 at 0.1 s; the off-chain leg starts one block later.
    assert_eq!(swap.initiated_at, SimTime::from_millis(100));
    let leg_find = out
        .trace
        .iter()
        .find(|e| e.kind == EventKind::FindPath && out.log.payments[e.payment.0 as usize].kind == PaymentKind::SwapLeg)
        .unwrap();
    assert_eq!(leg_find.time, SimTime::from_millis(10_100));
    assert_eq!(out.log.l1_txs, vec![SimTime::from_millis(100), SimTime::from_millis(10_300)]);
}

#[test]
fn one_swap_in_flight_per_channel() {
    let t = swap_fixture();
    let out = run_requests(&t, vec![req(0, 0, 3, 4, 50), req(1, 1000, 3, 4, 20)], &cfg(RebalancingMode::Full), false)
        .unwrap();
    let swaps = out.log.actions.iter().filter(|a| a.kind == RebalanceKind::SubmarineSwap).count();
    assert_eq!(swaps, 1);
    assert_eq!(balances(&out.final_topology)[2], (480, 520));
}

#[test]
fn rate_limited_swap_is_deferred() {
    let t = swap_fixture();
    let mut c = cfg(RebalancingMode::Full);
    c.l1_max_tps = Some(1);
    let out = run_requests(&t, vec![req(0, 0, 3, 4, 50)], &c, false).unwrap();
    assert!(out.log.l1_txs.is_empty());
    assert_eq!(out.log.deferred_swaps, vec![SimTime::from_millis(100)]);
    assert_eq!(balances(&out.final_topology)[2], (100, 900));
}

#[test]
fn swaps_off_outside_full_mode() {
    let t = swap_fixture();
    for mode in [RebalancingMode::WaterfallOnly, RebalancingMode::None] {
        let out = run_requests(&t, vec![req(0, 0, 3, 4, 50)], &cfg(mode), false).unwrap();
        assert!(out.log.l1_txs.is_empty() && out.log.actions.is_empty());
    }
}

#[test]
fn generated_run_meets_deadline_and_replays() {
    let mut params = crate::topology::scaled_europe_params(Money::euros(20_000), Money::euros(20_000));
    params.total_citizens = 30_000;
    params.citizens_per_lsp = 1_000;
    let t = crate::topology::generate_topology(&params).unwrap();
    let profile = LoadProfile::new(
        vec![crate::loadgen::LoadSegment { start: SimTime::ZERO, end: SimTime::from_secs(600), rate: 5.0 }],
        ArrivalProcess::Poisson,
    )
    .unwrap();
    let table = ScenarioTable::default();
    let c = SimConfig { invariant_checks: InvariantChecks::Full, ..SimConfig::default() };
    let a = run_detailed(&t, &profile, &table, &c).unwrap();
    let b = run_detailed(&t, &profile, &table, &c).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.final_topology, b.final_topology);
    assert!(a.log.retail().count() > 2_000);
    for p in a.log.retail() {
        if let Some(l) = p.latency_us() {
            assert!(l <= 10_000_000);
        }
    }
    assert!(crate::metrics::success_rate(&a.log, PaymentKind::Retail).unwrap() > 0.9);
    let _ = build_profile(ProfileKind::AverageDay, ArrivalProcess::Deterministic);
}

#[test]
fn config_validation() {
    let mut c = SimConfig::default();
    assert!(c.validate().is_ok());
    c.swap_threshold = 0.5;
    assert!(c.validate().is_err());
    c = SimConfig { hop_delay_ms: 0, ..SimConfig::default() };
    assert!(c.validate().is_err());
    assert_eq!("waterfall-only".parse::<RebalancingMode>(), Ok(RebalancingMode::WaterfallOnly));
    assert!("fast".parse::<RebalancingMode>().is_err());
}
