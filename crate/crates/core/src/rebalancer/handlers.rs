use super::{
    plan_withdrawal, reverse_trigger, swap_amount, swap_needed, waterfall_deposit_amount, RebalanceAction,
    RebalanceKind, RebalanceOutcome, SwapPhase, SwapState,
};
use crate::engine::event::EventKind;
use crate::engine::payment::{FailReason, Hop, Payment, PaymentId, PaymentKind, PaymentStatus};
use crate::engine::{invariant, Simulation};
use crate::topology::{ChannelId, NodeId};
use crate::units::{Money, SimDuration, SimTime};
use crate::SimError;

fn hop(sim: &Simulation<'_>, channel: ChannelId, from: NodeId) -> Hop {
    let ch = sim.net.channel(channel);
    if from == ch.a {
        Hop { channel, from, to: ch.b, dir: crate::topology::Direction::AtoB }
    } else {
        Hop { channel, from, to: ch.a, dir: crate::topology::Direction::BtoA }
    }
}

impl Simulation<'_> {
    fn record(&mut self, kind: RebalanceKind, p: &Payment, actor: NodeId, outcome: RebalanceOutcome) {
        let channel = p.fixed_hop.map_or(ChannelId(0), |h| h.channel);
        self.log.actions.push(RebalanceAction {
            kind,
            actor,
            channel,
            amount: p.amount,
            initiated_at: p.created_at,
            completed_at: self.now,
            outcome,
        });
    }

    fn spawn(&mut self, kind: PaymentKind, h: Hop, amount: Money, parent: Option<PaymentId>, start: SimTime) -> PaymentId {
        let id = self.alloc_id();
        let mut p = Payment::new(id, kind, h.from, h.to, amount, self.now);
        p.fixed_hop = Some(h);
        p.parent = parent;
        self.payments.insert(id, p);
        self.schedule(start, EventKind::FindPath, id, 0);
        id
    }

    // ---- reverse waterfall ----

    /// Starts a withdrawal if the sender cannot cover the payment. Returns
    /// true when the payment was queued or failed here.
    pub(crate) fn handle_reverse_waterfall(&mut self, pid: PaymentId) -> Result<bool, SimError> {
        let p = self.payment(pid)?;
        let (eu, amount) = (p.sender, p.amount);
        let c = self.net.leaf_channel[eu.index()].ok_or_else(|| invariant(self.now, format!("{eu} has no wallet channel")))?;
        let ch = self.net.channel(c);
        let (balance, cap) = (ch.balance_of(eu), ch.capacity);
        if !reverse_trigger(balance, amount) {
            return Ok(false);
        }
        let lsp = if ch.a == eu { ch.b } else { ch.a };
        let available = ch.balance_of(lsp);
        let w = match plan_withdrawal(balance, amount, cap, self.config.min_wallet) {
            Err(_) => {
                self.finish(pid, PaymentStatus::Failed(FailReason::CapExceeded))?;
                return Ok(true);
            }
            Ok(w) => w.min(available),
        };
        if balance + w < amount {
            self.finish(pid, PaymentStatus::Failed(FailReason::ReverseWaterfallFailed))?;
            return Ok(true);
        }
        let h = hop(self, c, lsp);
        let start = self.now + SimDuration::from_millis(self.config.deposit_roundtrip_ms);
        self.spawn(PaymentKind::Withdrawal, h, w, Some(pid), start);
        self.payment_mut(pid)?.status = PaymentStatus::AwaitingWithdrawal;
        self.withdrawal_queues.entry(eu).or_default().push_back(pid);
        Ok(true)
    }

    /// The withdrawn funds reached the user: release the oldest waiting payment.
    pub(crate) fn withdrawal_arrived(&mut self, wid: PaymentId) -> Result<(), SimError> {
        let w = self.payment(wid)?.clone();
        self.cs_accounts[w.receiver.index()] -= w.amount.0 as i64;
        let queue = self.withdrawal_queues.get_mut(&w.receiver);
        let parent = queue.and_then(|q| q.pop_front());
        if self.withdrawal_queues.get(&w.receiver).is_some_and(|q| q.is_empty()) {
            self.withdrawal_queues.remove(&w.receiver);
        }
        let Some(parent) = parent else {
            self.record(RebalanceKind::ReverseWithdrawal, &w, w.receiver, RebalanceOutcome::Expired);
            return Ok(());
        };
        let expired = self.payment(parent)?.deadline.is_some_and(|dl| self.now >= dl);
        if expired {
            self.record(RebalanceKind::ReverseWithdrawal, &w, w.receiver, RebalanceOutcome::Expired);
            return self.finish(parent, PaymentStatus::Failed(FailReason::Timeout));
        }
        self.record(RebalanceKind::ReverseWithdrawal, &w, w.receiver, RebalanceOutcome::Completed);
        self.payment_mut(parent)?.status = PaymentStatus::Pending;
        self.schedule(self.now, EventKind::FindPath, parent, 0);
        Ok(())
    }

    pub(crate) fn withdrawal_finished(&mut self, w: &Payment) -> Result<(), SimError> {
        if w.status == PaymentStatus::Succeeded {
            return Ok(());
        }
        self.record(RebalanceKind::ReverseWithdrawal, w, w.receiver, RebalanceOutcome::Failed);
        let Some(parent) = w.parent else { return Ok(()) };
        if let Some(q) = self.withdrawal_queues.get_mut(&w.receiver) {
            q.retain(|&x| x != parent);
            if q.is_empty() {
                self.withdrawal_queues.remove(&w.receiver);
            }
        }
        if self.payments.contains_key(&parent) {
            self.finish(parent, PaymentStatus::Failed(FailReason::ReverseWaterfallFailed))?;
        }
        Ok(())
    }

    // ---- waterfall ----

    /// The last forwarder cannot pay the receiver without overflowing its
    /// wallet: hold the payment and notify the receiver.
    pub(crate) fn handle_waterfall(&mut self, pid: PaymentId) -> Result<(), SimError> {
        let now = self.now;
        let p = self.payment_mut(pid)?;
        p.held_since = Some(now);
        p.status = PaymentStatus::AwaitingDeposit;
        let n = p.hops() as u16;
        self.schedule(now + self.config.hop_delay(), EventKind::NotifyPayment, pid, n);
        Ok(())
    }

    /// The receiver learns of the incoming payment and deposits the excess.
    pub(crate) fn on_notify(&mut self, pid: PaymentId) -> Result<(), SimError> {
        let p = self.payment(pid)?;
        let n = p.hops() as u16;
        let last = p.route[n as usize - 1];
        let amount = p.amount;
        let ch = self.net.channel(last.channel);
        let lsp_balance = ch.balance_of(last.from);
        if lsp_balance >= amount {
            // Room appeared in the meantime.
            self.payment_mut(pid)?.status = PaymentStatus::InFlight;
            self.schedule(self.now, EventKind::ForwardPayment, pid, n - 1);
            return Ok(());
        }
        let cap = ch.capacity;
        let spendable = ch.balance_of(last.to);
        let effective = cap - lsp_balance;
        let d = waterfall_deposit_amount(effective, amount, cap, self.config.min_deposit).min(spendable);
        if d.is_zero() {
            return self.begin_fail(pid, n - 1, FailReason::WaterfallFailed);
        }
        let h = hop(self, last.channel, last.to);
        let start = self.now + SimDuration::from_millis(self.config.deposit_roundtrip_ms);
        self.spawn(PaymentKind::Deposit, h, d, Some(pid), start);
        Ok(())
    }

    pub(crate) fn deposit_arrived(&mut self, did: PaymentId) -> Result<(), SimError> {
        let dep = self.payment(did)?.clone();
        self.cs_accounts[dep.sender.index()] += dep.amount.0 as i64;
        let parent = dep.parent.ok_or_else(|| invariant(self.now, format!("deposit {did} has no parent")))?;
        let p = self.payment(parent)?;
        let n = p.hops() as u16;
        let held = p.held_since.ok_or_else(|| invariant(self.now, format!("{parent} is not waiting for a deposit")))?;
        let in_time = self.now.saturating_since(held) <= SimDuration::from_secs_f64(self.config.waterfall_timeout_s);
        if !in_time {
            self.record(RebalanceKind::WaterfallDeposit, &dep, dep.sender, RebalanceOutcome::Expired);
            return self.begin_fail(parent, n - 1, FailReason::WaterfallTimeout);
        }
        self.record(RebalanceKind::WaterfallDeposit, &dep, dep.sender, RebalanceOutcome::Completed);
        let p = self.payment_mut(parent)?;
        p.held_since = None;
        p.status = PaymentStatus::InFlight;
        self.schedule(self.now, EventKind::ForwardPayment, parent, n - 1);
        Ok(())
    }

    pub(crate) fn deposit_finished(&mut self, dep: &Payment) -> Result<(), SimError> {
        if dep.status == PaymentStatus::Succeeded {
            return Ok(());
        }
        self.record(RebalanceKind::WaterfallDeposit, dep, dep.sender, RebalanceOutcome::Failed);
        let Some(parent) = dep.parent else { return Ok(()) };
        match self.payments.get(&parent) {
            Some(p) if p.held_since.is_some() => {
                let n = p.hops() as u16;
                self.begin_fail(parent, n - 1, FailReason::WaterfallFailed)
            }
            _ => Ok(()),
        }
    }

    // ---- submarine swaps ----

    /// After a lock on `h`, checks whether the receiving side of a routing
    /// channel has grown past the threshold and starts a swap if so.
    pub(crate) fn consider_swap(&mut self, h: Hop) {
        if self.net.role(h.from).is_end_user() || self.net.role(h.to).is_end_user() || self.swaps.contains_key(&h.channel)
        {
            return;
        }
        let ch = self.net.channel(h.channel);
        let projected = ch.balance_of(h.to) + ch.locked_toward(h.to);
        if !swap_needed(projected, ch.capacity, self.config.swap_threshold) {
            return;
        }
        let amount = swap_amount(projected, ch.capacity).min(ch.balance_of(h.to));
        if amount.is_zero() {
            return;
        }
        if let Some(max) = self.config.l1_max_tps {
            while self.l1_window.front().is_some_and(|t| t.0 + 1_000_000 <= self.now.0) {
                self.l1_window.pop_front();
            }
            if self.l1_window.len() + self.config.swap_l1_tx_count as usize > max as usize {
                self.log.deferred_swaps.push(self.now);
                return;
            }
            for _ in 0..self.config.swap_l1_tx_count {
                self.l1_window.push_back(self.now);
            }
        }
        let leg = hop(self, h.channel, h.to);
        self.swaps.insert(
            h.channel,
            SwapState {
                channel: h.channel,
                initiator: h.to,
                counterparty: h.from,
                amount,
                phase: SwapPhase::OnChainPrep,
                initiated_at: self.now,
            },
        );
        let start = self.now + SimDuration::from_secs_f64(self.config.block_time_s);
        self.spawn(PaymentKind::SwapLeg, leg, amount, None, start);
    }

    pub(crate) fn swap_leg_started(&mut self, channel: ChannelId) {
        if let Some(s) = self.swaps.get_mut(&channel) {
            s.phase = SwapPhase::OffChainLeg;
        }
    }

    pub(crate) fn swap_finished(&mut self, leg: &Payment) -> Result<(), SimError> {
        let channel = leg.fixed_hop.map(|h| h.channel).ok_or_else(|| invariant(self.now, "swap leg without a hop"))?;
        let mut swap = self.swaps.remove(&channel).ok_or_else(|| invariant(self.now, format!("no swap on {channel}")))?;
        let outcome = if leg.status == PaymentStatus::Succeeded {
            swap.phase = SwapPhase::Done;
            RebalanceOutcome::Completed
        } else {
            RebalanceOutcome::Failed
        };
        self.log.actions.push(RebalanceAction {
            kind: RebalanceKind::SubmarineSwap,
            actor: swap.initiator,
            channel,
            amount: swap.amount,
            initiated_at: swap.initiated_at,
            completed_at: self.now,
            outcome,
        });
        // The on-chain HTLC is funded at initiation; the claim (or refund)
        // follows when the off-chain leg resolves.
        for i in 0..self.config.swap_l1_tx_count {
            self.log.l1_txs.push(if i == 0 { swap.initiated_at } else { self.now });
        }
        Ok(())
    }
}
