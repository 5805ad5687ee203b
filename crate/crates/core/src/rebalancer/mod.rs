//! Automated channel rebalancing.
//!
//! Three mechanisms keep channels usable under sustained one-directional load:
//!
//! - **Waterfall**: an end user about to receive more than its wallet cap
//!   first deposits the excess to its custodian (the LSP here).
//! - **Reverse waterfall**: an end user short of funds withdraws from its
//!   custodian before paying.
//! - **Submarine swap**: an LSP or central bank whose side of a routing
//!   channel grows past a threshold pushes the surplus back off-chain and is
//!   paid on-chain, re-centering the channel.
//!
//! The pure decision rules are free functions here; `handlers` applies them
//! to the running simulation.

mod handlers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{ChannelId, NodeId};
use crate::units::{Money, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RebalanceKind {
    WaterfallDeposit,
    ReverseWithdrawal,
    SubmarineSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RebalanceOutcome {
    Completed,
    /// The operation landed after the payment it served had given up.
    Expired,
    /// The operation could not be carried out (no funds, swap leg failed).
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebalanceAction {
    pub kind: RebalanceKind,
    pub actor: NodeId,
    pub channel: ChannelId,
    pub amount: Money,
    pub initiated_at: SimTime,
    pub completed_at: SimTime,
    pub outcome: RebalanceOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapPhase {
    /// Waiting one block for the on-chain HTLC to confirm.
    OnChainPrep,
    /// The off-chain leg is in flight.
    OffChainLeg,
    Done,
}

/// An in-progress submarine swap. At most one exists per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapState {
    pub channel: ChannelId,
    /// The node holding the surplus; it sends the off-chain leg.
    pub initiator: NodeId,
    pub counterparty: NodeId,
    pub amount: Money,
    pub phase: SwapPhase,
    pub initiated_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WithdrawalRefusal {
    #[error("payment exceeds the wallet cap")]
    CapExceeded,
}

/// True when receiving `payment` on top of `balance` would overflow the cap.
pub fn waterfall_trigger(balance: Money, payment: Money, cap: Money) -> bool {
    balance + payment > cap
}

/// Deposit `max(B + P - C, L_D)`, never more than the balance that funds it.
pub fn waterfall_deposit_amount(balance: Money, payment: Money, cap: Money, min_deposit: Money) -> Money {
    let excess = (balance + payment).saturating_sub(cap);
    excess.max(min_deposit).min(balance)
}

pub fn reverse_trigger(balance: Money, payment: Money) -> bool {
    balance < payment
}

/// Withdrawal `max(L_W - B, P - B)`, zero when neither term is positive.
pub fn withdrawal_amount(balance: Money, payment: Money, min_wallet: Money) -> Money {
    min_wallet.saturating_sub(balance).max(payment.saturating_sub(balance))
}

/// Withdrawal actually requested: the formula amount clamped to the wallet's
/// headroom `C - B`. Refused when the payment cannot fit under the cap at all.
pub fn plan_withdrawal(
    balance: Money,
    payment: Money,
    cap: Money,
    min_wallet: Money,
) -> Result<Money, WithdrawalRefusal> {
    if payment > cap {
        return Err(WithdrawalRefusal::CapExceeded);
    }
    let w = withdrawal_amount(balance, payment, min_wallet).min(cap.saturating_sub(balance));
    if balance + w < payment {
        return Err(WithdrawalRefusal::CapExceeded);
    }
    Ok(w)
}

/// Threshold as parts per million, so comparisons against integer balances
/// are exact.
fn threshold_ppm(threshold: f64) -> u128 {
    (threshold * 1e6).round() as u128
}

/// True when `balance` is strictly above `threshold × capacity`.
pub fn swap_needed(balance: Money, capacity: Money, threshold: f64) -> bool {
    balance.0 as u128 * 1_000_000 > threshold_ppm(threshold) * capacity.0 as u128
}

/// Amount that brings `balance` back to half the capacity.
pub fn swap_amount(balance: Money, capacity: Money) -> Money {
    balance.saturating_sub(Money(capacity.0 / 2))
}
