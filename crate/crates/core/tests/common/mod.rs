//! Fixtures and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shpcn_core::engine::event::EventKind;
use shpcn_core::engine::payment::PaymentId;
use shpcn_core::engine::TraceEntry;
use shpcn_core::loadgen::{PaymentRequest, Scenario};
use shpcn_core::topology::{Channel, ChannelId, MerchantSize, Node, NodeId, Role, Topology};
use shpcn_core::{Money, SimTime};

/// Nodes all in country 0; channels as (a, b, capacity, balance_a).
pub fn build(roles: &[Role], chans: &[(u32, u32, u64, u64)]) -> Topology {
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

pub fn req(id: u64, at_ms: u64, sender: u32, receiver: u32, amount: u64) -> PaymentRequest {
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

/// A random network of at most six nodes: one central bank linked to two or
/// three LSPs, some LSP–LSP channels and two or three end users, with random
/// capacities and splits.
pub fn small_network(seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lsps = rng.gen_range(2..=3u32);
    let eus = rng.gen_range(2..=5 - lsps);
    let mut roles = vec![Role::CentralBank];
    roles.extend((0..lsps).map(|_| Role::Lsp));
    for _ in 0..eus {
        roles.push(if rng.gen_bool(0.5) { Role::Citizen } else { Role::Merchant(MerchantSize::S) });
    }
    let mut chans = Vec::new();
    let mut chan = |a: u32, b: u32, rng: &mut ChaCha8Rng| {
        let cap = rng.gen_range(1..=40u64) * 10;
        let ba = rng.gen_range(0..=cap);
        chans.push((a, b, cap, ba));
    };
    for l in 1..=lsps {
        chan(0, l, &mut rng);
    }
    for a in 1..=lsps {
        for b in a + 1..=lsps {
            if rng.gen_bool(0.6) {
                chan(a, b, &mut rng);
            }
        }
    }
    for e in 0..eus {
        let id = 1 + lsps + e;
        let l = rng.gen_range(1..=lsps);
        chan(l, id, &mut rng);
    }
    build(&roles, &chans)
}

/// Up to `n` payments between distinct end users, 20 s apart so that each
/// one finishes before the next starts.
pub fn spaced_requests(t: &Topology, n: usize, seed: u64) -> Vec<PaymentRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let eus: Vec<u32> = t.nodes.iter().filter(|n| n.role.is_end_user()).map(|n| n.id.0).collect();
    (0..n)
        .map(|i| {
            let s = eus[rng.gen_range(0..eus.len())];
            let mut r = eus[rng.gen_range(0..eus.len())];
            while r == s {
                r = eus[rng.gen_range(0..eus.len())];
            }
            req(i as u64, i as u64 * 20_000, s, r, rng.gen_range(1..=200))
        })
        .collect()
}

/// Sequential reference executor without rebalancing. Every simple path is
/// enumerated and the shortest usable one (ties: lexicographically smallest
/// node sequence) is tried; a hop lacking balance is excluded and the payment
/// retried while the deadline allows.
pub struct Oracle {
    pub balances: Vec<[u64; 2]>,
    ends: Vec<(u32, u32)>,
    caps: Vec<u64>,
    adj: Vec<Vec<(u32, usize)>>,
    pub hop_ms: u64,
    pub deadline_ms: u64,
}

impl Oracle {
    pub fn new(t: &Topology) -> Self {
        let mut adj = vec![Vec::new(); t.nodes.len()];
        for (i, c) in t.channels.iter().enumerate() {
            adj[c.a.index()].push((c.b.0, i));
            adj[c.b.index()].push((c.a.0, i));
        }
        Oracle {
            balances: t.channels.iter().map(|c| [c.balance_a.0, c.balance_b.0]).collect(),
            ends: t.channels.iter().map(|c| (c.a.0, c.b.0)).collect(),
            caps: t.channels.iter().map(|c| c.capacity.0).collect(),
            adj,
            hop_ms: 100,
            deadline_ms: 10_000,
        }
    }

    fn side(&self, ch: usize, from: u32) -> usize {
        if self.ends[ch].0 == from {
            0
        } else {
            1
        }
    }

    fn paths(&self, src: u32, dst: u32) -> Vec<Vec<(u32, usize)>> {
        fn walk(o: &Oracle, at: u32, dst: u32, seen: &mut Vec<u32>, cur: &mut Vec<(u32, usize)>, out: &mut Vec<Vec<(u32, usize)>>) {
            if at == dst {
                out.push(cur.clone());
                return;
            }
            for &(next, ch) in &o.adj[at as usize] {
                if !seen.contains(&next) {
                    seen.push(next);
                    cur.push((next, ch));
                    walk(o, next, dst, seen, cur, out);
                    cur.pop();
                    seen.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, src, dst, &mut vec![src], &mut Vec::new(), &mut out);
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| {
            a.iter().map(|h| h.0).cmp(b.iter().map(|h| h.0))
        }));
        out
    }

    /// Executes one payment; returns whether it succeeded.
    pub fn pay(&mut self, src: u32, dst: u32, amount: u64) -> bool {
        let mut excluded: Vec<(usize, usize)> = Vec::new();
        let mut elapsed = 0u64;
        loop {
            let route = self.paths(src, dst).into_iter().find(|p| {
                let mut from = src;
                p.iter().enumerate().all(|(i, &(to, ch))| {
                    let s = self.side(ch, from);
                    let ok = self.caps[ch] >= amount
                        && !excluded.contains(&(ch, s))
                        && (i > 0 || self.balances[ch][s] >= amount);
                    from = to;
                    ok
                })
            });
            let Some(route) = route else { return false };
            let n = route.len() as u64;
            if elapsed + 2 * n * self.hop_ms > self.deadline_ms {
                return false;
            }
            let mut from = src;
            let mut failed = None;
            for (j, &(to, ch)) in route.iter().enumerate() {
                let s = self.side(ch, from);
                if self.balances[ch][s] < amount {
                    failed = Some((j, ch, s));
                    break;
                }
                from = to;
            }
            match failed {
                None => {
                    let mut from = src;
                    for &(to, ch) in &route {
                        let s = self.side(ch, from);
                        self.balances[ch][s] -= amount;
                        self.balances[ch][1 - s] += amount;
                        from = to;
                    }
                    return true;
                }
                Some((j, ch, s)) => {
                    excluded.push((ch, s));
                    elapsed += 2 * j as u64 * self.hop_ms;
                    if elapsed >= self.deadline_ms {
                        return false;
                    }
                }
            }
        }
    }
}

/// Checks that each payment's events follow the lifecycle diagram.
pub fn diagram_violation(trace: &[TraceEntry]) -> Option<String> {
    use EventKind::*;
    let allowed = |prev: Option<EventKind>, next: EventKind| -> bool {
        match prev {
            None => matches!(next, GeneratePayment | FindPath),
            Some(GeneratePayment) => next == FindPath,
            // A FindPath may be followed by another one after a withdrawal.
            Some(FindPath) => matches!(next, SendPayment | FindPath),
            Some(SendPayment) => matches!(next, ForwardPayment | ReceivePayment | ReceiveFail),
            Some(ForwardPayment) => {
                matches!(next, ForwardPayment | ReceivePayment | ForwardFail | ReceiveFail | NotifyPayment)
            }
            Some(NotifyPayment) => matches!(next, ForwardPayment | ForwardFail | ReceiveFail),
            Some(ReceivePayment) => matches!(next, ForwardSuccess | ReceiveSuccess | ForwardFail | ReceiveFail),
            Some(ForwardSuccess) => matches!(next, ForwardSuccess | ReceiveSuccess),
            Some(ForwardFail) => matches!(next, ForwardFail | ReceiveFail),
            Some(ReceiveFail) => next == FindPath,
            Some(ReceiveSuccess) => false,
        }
    };
    let mut last: HashMap<PaymentId, EventKind> = HashMap::new();
    for e in trace {
        let prev = last.get(&e.payment).copied();
        if !allowed(prev, e.kind) {
            return Some(format!("{}: {:?} after {:?} at {}", e.payment, e.kind, prev, e.time));
        }
        last.insert(e.payment, e.kind);
    }
    None
}
