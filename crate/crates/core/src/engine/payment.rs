use std::fmt;

use serde::{Deserialize, Serialize};

use crate::topology::{ChannelId, Direction, NodeId};
use crate::units::{Money, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaymentId(pub u32);

impl fmt::Display for PaymentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PaymentKind {
    Retail,
    Deposit,
    Withdrawal,
    SwapLeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    /// No route satisfies the amount.
    NoRoute,
    /// The retry window closed.
    Timeout,
    /// A hop lacked balance when the payment reached it.
    InsufficientBalance,
    /// The amount cannot fit in the payer's or payee's wallet at all.
    CapExceeded,
    WaterfallFailed,
    WaterfallTimeout,
    ReverseWaterfallFailed,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailReason::NoRoute => "no-route",
            FailReason::Timeout => "timeout",
            FailReason::InsufficientBalance => "insufficient-balance",
            FailReason::CapExceeded => "cap-exceeded",
            FailReason::WaterfallFailed => "waterfall-failed",
            FailReason::WaterfallTimeout => "waterfall-timeout",
            FailReason::ReverseWaterfallFailed => "reverse-waterfall-failed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PaymentStatus {
    Pending,
    AwaitingWithdrawal,
    AwaitingDeposit,
    InFlight,
    Succeeded,
    Failed(FailReason),
}

impl PaymentStatus {
    pub fn is_final(self) -> bool {
        matches!(self, PaymentStatus::Succeeded | PaymentStatus::Failed(_))
    }
}

/// One directed step of a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hop {
    pub channel: ChannelId,
    pub from: NodeId,
    pub to: NodeId,
    pub dir: Direction,
}

#[derive(Debug, Clone)]
pub struct Payment {
    pub id: PaymentId,
    pub request_id: Option<u64>,
    pub kind: PaymentKind,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub amount: Money,
    pub created_at: SimTime,
    /// Retail payments only.
    pub deadline: Option<SimTime>,
    pub route: Vec<Hop>,
    /// Hops `[0, locked_hops)` of the current route hold locked funds.
    pub locked_hops: u16,
    pub attempts: u16,
    pub excluded: Vec<(ChannelId, Direction)>,
    pub status: PaymentStatus,
    pub completed_at: Option<SimTime>,
    /// Why the current attempt is unwinding, and the node that gave up.
    pub pending_failure: Option<(FailReason, u16)>,
    /// Set while the final hop waits for a waterfall deposit.
    pub held_since: Option<SimTime>,
    /// Retail payment served by this deposit or withdrawal.
    pub parent: Option<PaymentId>,
    /// Fixed single-hop route for deposits, withdrawals and swap legs.
    pub fixed_hop: Option<Hop>,
}

impl Payment {
    pub fn new(id: PaymentId, kind: PaymentKind, sender: NodeId, receiver: NodeId, amount: Money, now: SimTime) -> Self {
        Payment {
            id,
            request_id: None,
            kind,
            sender,
            receiver,
            amount,
            created_at: now,
            deadline: None,
            route: Vec::new(),
            locked_hops: 0,
            attempts: 0,
            excluded: Vec::new(),
            status: PaymentStatus::Pending,
            completed_at: None,
            pending_failure: None,
            held_since: None,
            parent: None,
            fixed_hop: None,
        }
    }

    pub fn hops(&self) -> usize {
        self.route.len()
    }

    pub fn is_excluded(&self, channel: ChannelId, dir: Direction) -> bool {
        self.excluded.iter().any(|&(c, d)| c == channel && d == dir)
    }
}
