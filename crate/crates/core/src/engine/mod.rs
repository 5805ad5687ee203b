//! Sequential discrete-event engine for the payment lifecycle.
//!
//! A payment of `n` hops with per-hop delay `d`, sent at `t0`, goes through:
//!
//! ```text
//! t0          FindPath, SendPayment        node 0 locks hop 0
//! t0 + i·d    ForwardPayment (node i)      locks hop i, 0 < i < n
//! t0 + n·d    ReceivePayment (node n)      settles hop n-1
//! t0 + (2n-k)·d ForwardSuccess (node k)    settles hop k-1, 0 < k < n
//! t0 + 2n·d   ReceiveSuccess (node 0)
//! ```
//!
//! A failure at node `j` (hop `j` could not be locked) unwinds backwards:
//! `ForwardFail` at nodes `j-1..1` unlocks their outgoing hop, `ReceiveFail`
//! at node 0 unlocks hop 0 and decides between retry and final failure.

pub mod event;
pub mod payment;
pub mod routing;
pub mod state;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::loadgen::{EndUserDirectory, LoadProfile, PaymentRequest, RequestStream, ScenarioTable};
use crate::metrics::{MetricsLog, PaymentRecord};
use crate::rebalancer::SwapState;
use crate::topology::{validate, ChannelId, NodeId, Topology};
use crate::units::{Money, SimDuration, SimTime};
use crate::SimError;
use event::{EventKind, EventQueue};
use payment::{FailReason, Hop, Payment, PaymentId, PaymentKind, PaymentStatus};
use routing::Router;
use state::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RebalancingMode {
    /// Waterfall, reverse waterfall and submarine swaps.
    Full,
    /// Waterfall and reverse waterfall, no swaps.
    WaterfallOnly,
    None,
}

impl RebalancingMode {
    pub const ALL: [RebalancingMode; 3] = [RebalancingMode::Full, RebalancingMode::WaterfallOnly, RebalancingMode::None];

    pub fn as_str(self) -> &'static str {
        match self {
            RebalancingMode::Full => "full",
            RebalancingMode::WaterfallOnly => "waterfall-only",
            RebalancingMode::None => "none",
        }
    }

    pub fn waterfalls(self) -> bool {
        self != RebalancingMode::None
    }

    pub fn swaps(self) -> bool {
        self == RebalancingMode::Full
    }
}

impl fmt::Display for RebalancingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RebalancingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RebalancingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown rebalancing mode {s:?} (expected full, waterfall-only or none)"))
    }
}

/// How much of the network to check for conservation after each event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantChecks {
    Off,
    /// Channels touched by the event.
    Touched,
    /// Every channel, every event. Only sensible for small networks.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub hop_delay_ms: u64,
    pub deposit_roundtrip_ms: u64,
    pub waterfall_timeout_s: f64,
    pub block_time_s: f64,
    pub swap_threshold: f64,
    /// L_D, smallest deposit a user makes.
    pub min_deposit: Money,
    /// L_W, balance a user tops up to when withdrawing.
    pub min_wallet: Money,
    pub swap_l1_tx_count: u32,
    /// Layer-1 transactions admitted per second; `None` is unlimited.
    pub l1_max_tps: Option<u32>,
    pub payment_deadline_s: f64,
    pub rebalancing: RebalancingMode,
    pub seed: u64,
    pub invariant_checks: InvariantChecks,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            hop_delay_ms: 100,
            deposit_roundtrip_ms: 300,
            waterfall_timeout_s: 5.0,
            block_time_s: 10.0,
            swap_threshold: 0.8,
            min_deposit: Money::ZERO,
            min_wallet: Money::euros(50),
            swap_l1_tx_count: 2,
            l1_max_tps: None,
            payment_deadline_s: 10.0,
            rebalancing: RebalancingMode::Full,
            seed: 1,
            invariant_checks: InvariantChecks::Touched,
        }
    }
}

impl SimConfig {
    // The negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_owned()));
        if self.hop_delay_ms == 0 || self.deposit_roundtrip_ms == 0 {
            return bad("delays must be positive");
        }
        if !(self.block_time_s > 0.0) || !(self.payment_deadline_s > 0.0) {
            return bad("block time and payment deadline must be positive");
        }
        if !(self.waterfall_timeout_s >= 0.0) {
            return bad("waterfall timeout must be non-negative");
        }
        if !(self.swap_threshold > 0.5 && self.swap_threshold <= 1.0) {
            return bad("swap threshold must lie in (0.5, 1]");
        }
        Ok(())
    }

    pub fn hop_delay(&self) -> SimDuration {
        SimDuration::from_millis(self.hop_delay_ms)
    }
}

/// One processed event, for lifecycle conformance checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub time: SimTime,
    pub payment: PaymentId,
    pub kind: EventKind,
    pub hop: u16,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    /// The input topology with end-of-run balances.
    pub final_topology: Topology,
    /// Custodian account movements per node: deposits in, withdrawals out.
    pub cs_accounts: Vec<i64>,
    pub trace: Vec<TraceEntry>,
    pub events: u64,
}

/// Runs the whole load profile and returns the metrics log.
pub fn run(
    topology: &Topology,
    profile: &LoadProfile,
    table: &ScenarioTable,
    config: &SimConfig,
) -> Result<MetricsLog, SimError> {
    Ok(run_detailed(topology, profile, table, config)?.log)
}

/// Like [`run`], also returning final balances.
pub fn run_detailed(
    topology: &Topology,
    profile: &LoadProfile,
    table: &ScenarioTable,
    config: &SimConfig,
) -> Result<RunOutput, SimError> {
    let dir = if profile.segments().is_empty() {
        None
    } else {
        Some(EndUserDirectory::new(topology).map_err(|e| SimError::InvalidTopology(e.to_string()))?)
    };
    let requests: Box<dyn Iterator<Item = PaymentRequest>> = match &dir {
        Some(d) => Box::new(RequestStream::new(table, d, profile, config.seed)),
        None => Box::new(std::iter::empty()),
    };
    let mut sim = Simulation::new(topology, config, requests, false)?;
    sim.log.horizon = profile.end();
    sim.run()
}

/// Runs an explicit request list, which must be ordered by creation time.
pub fn run_requests(
    topology: &Topology,
    requests: Vec<PaymentRequest>,
    config: &SimConfig,
    trace: bool,
) -> Result<RunOutput, SimError> {
    for r in &requests {
        let ok = |n: NodeId| n.index() < topology.nodes.len() && topology.node(n).role.is_end_user();
        if !ok(r.sender) || !ok(r.receiver) || r.sender == r.receiver || r.amount.is_zero() {
            return Err(SimError::InvalidConfig(format!("request {}: endpoints must be two distinct end users and the amount positive", r.id)));
        }
    }
    let horizon = requests.iter().map(|r| r.created_at).max().unwrap_or(SimTime::ZERO);
    let mut sim = Simulation::new(topology, config, Box::new(requests.into_iter()), trace)?;
    sim.log.horizon = horizon;
    sim.run()
}

pub(crate) struct Simulation<'a> {
    pub(crate) topo: &'a Topology,
    pub(crate) config: SimConfig,
    pub(crate) net: Network,
    router: Router,
    queue: EventQueue,
    pub(crate) now: SimTime,
    pub(crate) payments: HashMap<PaymentId, Payment>,
    next_id: u32,
    requests: Box<dyn Iterator<Item = PaymentRequest> + 'a>,
    staged: Option<(PaymentId, PaymentRequest)>,
    pub(crate) withdrawal_queues: HashMap<NodeId, VecDeque<PaymentId>>,
    pub(crate) swaps: HashMap<ChannelId, SwapState>,
    pub(crate) l1_window: VecDeque<SimTime>,
    pub(crate) cs_accounts: Vec<i64>,
    pub(crate) log: MetricsLog,
    trace: Option<Vec<TraceEntry>>,
    touched: Vec<ChannelId>,
    events: u64,
}

pub(crate) fn invariant(time: SimTime, message: impl Into<String>) -> SimError {
    SimError::Invariant { time, message: message.into() }
}

impl<'a> Simulation<'a> {
    fn new(
        topo: &'a Topology,
        config: &SimConfig,
        requests: Box<dyn Iterator<Item = PaymentRequest> + 'a>,
        trace: bool,
    ) -> Result<Self, SimError> {
        config.validate()?;
        if let Some(v) = validate(topo).first() {
            return Err(SimError::InvalidTopology(v.to_string()));
        }
        let net = Network::new(topo);
        Ok(Simulation {
            topo,
            config: config.clone(),
            router: Router::new(topo.nodes.len()),
            queue: EventQueue::default(),
            now: SimTime::ZERO,
            payments: HashMap::new(),
            next_id: 0,
            requests,
            staged: None,
            withdrawal_queues: HashMap::new(),
            swaps: HashMap::new(),
            l1_window: VecDeque::new(),
            cs_accounts: vec![0; topo.nodes.len()],
            log: MetricsLog::new(config.clone(), topo.total_routing_liquidity()),
            trace: trace.then(Vec::new),
            touched: Vec::new(),
            net,
            events: 0,
        })
    }

    fn run(mut self) -> Result<RunOutput, SimError> {
        let initial_funds = self.net.total_funds();
        self.stage_next();
        while let Some(ev) = self.queue.pop() {
            if ev.time < self.now {
                return Err(invariant(ev.time, format!("event time went backwards from {}", self.now)));
            }
            self.now = ev.time;
            self.events += 1;
            if let Some(t) = &mut self.trace {
                t.push(TraceEntry { time: ev.time, payment: ev.payment, kind: ev.kind, hop: ev.hop });
            }
            self.dispatch(ev.kind, ev.payment, ev.hop)?;
            self.check_invariants()?;
        }
        if let Some((id, _)) = self.payments.iter().next() {
            return Err(invariant(self.now, format!("{id} never terminated")));
        }
        if self.net.total_funds() != initial_funds {
            return Err(invariant(self.now, "total funds changed"));
        }
        self.log.payments.sort_by_key(|p| p.id);
        self.log.l1_txs.sort();
        Ok(RunOutput {
            final_topology: self.net.snapshot(self.topo),
            cs_accounts: self.cs_accounts,
            trace: self.trace.unwrap_or_default(),
            events: self.events,
            log: self.log,
        })
    }

    fn dispatch(&mut self, kind: EventKind, pid: PaymentId, hop: u16) -> Result<(), SimError> {
        match kind {
            EventKind::GeneratePayment => self.on_generate(pid),
            EventKind::FindPath => self.on_find_path(pid),
            EventKind::SendPayment => self.on_send(pid),
            EventKind::ForwardPayment => self.on_forward(pid, hop),
            EventKind::ReceivePayment => self.on_receive(pid, hop),
            EventKind::ForwardSuccess => self.on_forward_success(pid, hop),
            EventKind::ReceiveSuccess => self.on_receive_success(pid),
            EventKind::ForwardFail => self.on_forward_fail(pid, hop),
            EventKind::ReceiveFail => self.on_receive_fail(pid),
            EventKind::NotifyPayment => self.on_notify(pid),
        }
    }

    fn check_invariants(&mut self) -> Result<(), SimError> {
        let bad = |c: ChannelId| format!("channel {c} breaks conservation");
        match self.config.invariant_checks {
            InvariantChecks::Off => {}
            InvariantChecks::Touched => {
                for &c in &self.touched {
                    if !self.net.channel(c).is_conserved() {
                        return Err(invariant(self.now, bad(c)));
                    }
                }
            }
            InvariantChecks::Full => {
                for (i, ch) in self.net.channels.iter().enumerate() {
                    if !ch.is_conserved() {
                        return Err(invariant(self.now, bad(ChannelId(i as u32))));
                    }
                }
            }
        }
        self.touched.clear();
        Ok(())
    }

    // ---- scheduling helpers ----

    pub(crate) fn schedule(&mut self, at: SimTime, kind: EventKind, pid: PaymentId, hop: u16) {
        self.queue.push(at, kind, pid, hop);
    }

    pub(crate) fn alloc_id(&mut self) -> PaymentId {
        let id = PaymentId(self.next_id);
        self.next_id += 1;
        id
    }

    fn stage_next(&mut self) {
        if let Some(req) = self.requests.next() {
            let id = self.alloc_id();
            self.schedule(req.created_at, EventKind::GeneratePayment, id, 0);
            self.staged = Some((id, req));
        }
    }

    pub(crate) fn payment(&self, pid: PaymentId) -> Result<&Payment, SimError> {
        self.payments.get(&pid).ok_or_else(|| invariant(self.now, format!("event for unknown payment {pid}")))
    }

    pub(crate) fn payment_mut(&mut self, pid: PaymentId) -> Result<&mut Payment, SimError> {
        let now = self.now;
        self.payments.get_mut(&pid).ok_or_else(|| invariant(now, format!("event for unknown payment {pid}")))
    }

    // ---- channel operations ----

    fn lock(&mut self, h: Hop, amount: Money) -> bool {
        self.touched.push(h.channel);
        self.net.channel_mut(h.channel).lock(h.dir, amount)
    }

    fn settle(&mut self, h: Hop, amount: Money) -> Result<(), SimError> {
        self.touched.push(h.channel);
        self.net.channel_mut(h.channel).settle(h.dir, amount).map_err(|m| invariant(self.now, m))
    }

    fn unlock(&mut self, h: Hop, amount: Money) -> Result<(), SimError> {
        self.touched.push(h.channel);
        self.net.channel_mut(h.channel).unlock(h.dir, amount).map_err(|m| invariant(self.now, m))
    }

    /// Checks a fixed single-hop route the same way the router would.
    fn fixed_route(&self, p: &Payment, h: Hop) -> Option<Vec<Hop>> {
        let ch = self.net.channel(h.channel);
        (ch.capacity >= p.amount && ch.balance_of(h.from) >= p.amount && !p.is_excluded(h.channel, h.dir))
            .then(|| vec![h])
    }

    // ---- handlers ----

    fn on_generate(&mut self, pid: PaymentId) -> Result<(), SimError> {
        let (id, req) = self.staged.take().ok_or_else(|| invariant(self.now, "no staged request"))?;
        if id != pid {
            return Err(invariant(self.now, format!("staged request is {id}, event is for {pid}")));
        }
        self.stage_next();
        let mut p = Payment::new(pid, PaymentKind::Retail, req.sender, req.receiver, req.amount, self.now);
        p.request_id = Some(req.id);
        p.deadline = Some(self.now + SimDuration::from_secs_f64(self.config.payment_deadline_s));
        self.payments.insert(pid, p);
        self.schedule(self.now, EventKind::FindPath, pid, 0);
        Ok(())
    }

    fn on_find_path(&mut self, pid: PaymentId) -> Result<(), SimError> {
        let now = self.now;
        let d = self.config.hop_delay();
        let p = self.payments.get(&pid).ok_or_else(|| invariant(now, format!("event for unknown payment {pid}")))?;
        if p.deadline.is_some_and(|dl| now >= dl) {
            return self.finish(pid, PaymentStatus::Failed(FailReason::Timeout));
        }
        // Checked on every attempt: other payments from the same wallet may
        // have spent the funds since the last check.
        if p.kind == PaymentKind::Retail && self.config.rebalancing.waterfalls() && self.handle_reverse_waterfall(pid)? {
            return Ok(());
        }
        let p = &self.payments[&pid];
        let route = match p.fixed_hop {
            Some(h) => self.fixed_route(p, h),
            None => self.router.find_path(&self.net, p.sender, p.receiver, p.amount, &p.excluded),
        };
        let Some(route) = route else {
            return self.finish(pid, PaymentStatus::Failed(FailReason::NoRoute));
        };
        if p.deadline.is_some_and(|dl| now + d.times(2 * route.len() as u64) > dl) {
            return self.finish(pid, PaymentStatus::Failed(FailReason::Timeout));
        }
        if p.kind == PaymentKind::SwapLeg {
            self.swap_leg_started(route[0].channel);
        }
        let p = self.payment_mut(pid)?;
        p.route = route;
        p.locked_hops = 0;
        p.attempts += 1;
        p.status = PaymentStatus::InFlight;
        p.held_since = None;
        self.schedule(now, EventKind::SendPayment, pid, 0);
        Ok(())
    }

    fn on_send(&mut self, pid: PaymentId) -> Result<(), SimError> {
        self.try_lock(pid, 0)
    }

    fn on_forward(&mut self, pid: PaymentId, i: u16) -> Result<(), SimError> {
        let p = self.payment(pid)?;
        let n = p.hops() as u16;
        if p.deadline.is_some_and(|dl| self.now > dl) {
            return self.begin_fail(pid, i, FailReason::Timeout);
        }
        if i + 1 == n && p.kind == PaymentKind::Retail && self.config.rebalancing.waterfalls() {
            let h = p.route[i as usize];
            if self.net.channel(h.channel).balance_of(h.from) < p.amount && self.net.role(h.to).is_end_user() {
                return self.handle_waterfall(pid);
            }
        }
        self.try_lock(pid, i)
    }

    /// Node `i` locks hop `i` and passes the payment on, or starts the fail path.
    fn try_lock(&mut self, pid: PaymentId, i: u16) -> Result<(), SimError> {
        let p = self.payment(pid)?;
        let (h, amount, n) = (p.route[i as usize], p.amount, p.hops() as u16);
        if !self.lock(h, amount) {
            return self.begin_fail(pid, i, FailReason::InsufficientBalance);
        }
        let p = self.payment_mut(pid)?;
        p.locked_hops = i + 1;
        let kind = p.kind;
        let next = self.now + self.config.hop_delay();
        if i + 1 == n {
            self.schedule(next, EventKind::ReceivePayment, pid, n);
        } else {
            self.schedule(next, EventKind::ForwardPayment, pid, i + 1);
        }
        if kind == PaymentKind::Retail && self.config.rebalancing.swaps() {
            self.consider_swap(h);
        }
        Ok(())
    }

    fn on_receive(&mut self, pid: PaymentId, n: u16) -> Result<(), SimError> {
        let d = self.config.hop_delay();
        let p = self.payment(pid)?;
        if p.deadline.is_some_and(|dl| self.now + d.times(n as u64) > dl) {
            return self.begin_fail(pid, n, FailReason::Timeout);
        }
        let (h, amount, kind) = (p.route[n as usize - 1], p.amount, p.kind);
        self.settle(h, amount)?;
        match kind {
            PaymentKind::Deposit => self.deposit_arrived(pid)?,
            PaymentKind::Withdrawal => self.withdrawal_arrived(pid)?,
            _ => {}
        }
        self.success_step(pid, n)
    }

    /// Schedules the success message from node `k` back to node `k - 1`.
    fn success_step(&mut self, pid: PaymentId, k: u16) -> Result<(), SimError> {
        let at = self.now + self.config.hop_delay();
        if k > 1 {
            self.schedule(at, EventKind::ForwardSuccess, pid, k - 1);
        } else {
            self.schedule(at, EventKind::ReceiveSuccess, pid, 0);
        }
        Ok(())
    }

    fn on_forward_success(&mut self, pid: PaymentId, k: u16) -> Result<(), SimError> {
        let p = self.payment(pid)?;
        let (h, amount) = (p.route[k as usize - 1], p.amount);
        self.settle(h, amount)?;
        self.success_step(pid, k)
    }

    fn on_receive_success(&mut self, pid: PaymentId) -> Result<(), SimError> {
        self.payment_mut(pid)?.locked_hops = 0;
        self.finish(pid, PaymentStatus::Succeeded)
    }

    /// Node `j` could not pass the payment on; hops `0..j` are locked.
    pub(crate) fn begin_fail(&mut self, pid: PaymentId, j: u16, reason: FailReason) -> Result<(), SimError> {
        let now = self.now;
        let d = self.config.hop_delay();
        let p = self.payment_mut(pid)?;
        p.pending_failure = Some((reason, j));
        p.status = PaymentStatus::InFlight;
        p.held_since = None;
        if j == 0 {
            self.schedule(now, EventKind::ReceiveFail, pid, 0);
        } else if j == 1 {
            self.schedule(now + d, EventKind::ReceiveFail, pid, 0);
        } else {
            self.schedule(now + d, EventKind::ForwardFail, pid, j - 1);
        }
        Ok(())
    }

    fn on_forward_fail(&mut self, pid: PaymentId, k: u16) -> Result<(), SimError> {
        let p = self.payment(pid)?;
        let (h, amount) = (p.route[k as usize], p.amount);
        self.unlock(h, amount)?;
        self.payment_mut(pid)?.locked_hops = k;
        let at = self.now + self.config.hop_delay();
        if k > 1 {
            self.schedule(at, EventKind::ForwardFail, pid, k - 1);
        } else {
            self.schedule(at, EventKind::ReceiveFail, pid, 0);
        }
        Ok(())
    }

    fn on_receive_fail(&mut self, pid: PaymentId) -> Result<(), SimError> {
        let p = self.payment(pid)?;
        if p.locked_hops > 0 {
            let (h, amount) = (p.route[0], p.amount);
            self.unlock(h, amount)?;
        }
        let now = self.now;
        let p = self.payment_mut(pid)?;
        p.locked_hops = 0;
        let (reason, j) = p.pending_failure.take().ok_or_else(|| invariant(now, format!("{pid} failed without a reason")))?;
        let retry = reason == FailReason::InsufficientBalance && p.deadline.is_some_and(|dl| now < dl);
        if retry {
            let h = p.route[j as usize];
            p.excluded.push((h.channel, h.dir));
            p.status = PaymentStatus::Pending;
            self.schedule(now, EventKind::FindPath, pid, 0);
            return Ok(());
        }
        let reason = if reason == FailReason::InsufficientBalance && p.kind == PaymentKind::Retail {
            FailReason::Timeout
        } else {
            reason
        };
        self.finish(pid, PaymentStatus::Failed(reason))
    }

    /// Terminates a payment, logs it and notifies whatever was waiting on it.
    pub(crate) fn finish(&mut self, pid: PaymentId, status: PaymentStatus) -> Result<(), SimError> {
        let mut p = self.payments.remove(&pid).ok_or_else(|| invariant(self.now, format!("{pid} finished twice")))?;
        if p.locked_hops > 0 {
            return Err(invariant(self.now, format!("{pid} finished with {} hops still locked", p.locked_hops)));
        }
        p.status = status;
        if status == PaymentStatus::Succeeded {
            p.completed_at = Some(self.now);
        }
        self.log.payments.push(PaymentRecord {
            id: p.id,
            kind: p.kind,
            amount: p.amount,
            created_at: p.created_at,
            completed_at: p.completed_at,
            status,
            attempts: p.attempts,
            route_len: p.route.len() as u16,
        });
        match p.kind {
            PaymentKind::Retail => Ok(()),
            PaymentKind::Deposit => self.deposit_finished(&p),
            PaymentKind::Withdrawal => self.withdrawal_finished(&p),
            PaymentKind::SwapLeg => self.swap_finished(&p),
        }
    }
}

#[cfg(test)]
mod tests;
