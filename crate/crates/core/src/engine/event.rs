use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::payment::PaymentId;
use crate::units::SimTime;

/// The ten event kinds of the payment lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    GeneratePayment,
    FindPath,
    SendPayment,
    ForwardPayment,
    ReceivePayment,
    ForwardSuccess,
    ReceiveSuccess,
    ForwardFail,
    ReceiveFail,
    NotifyPayment,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::GeneratePayment,
        EventKind::FindPath,
        EventKind::SendPayment,
        EventKind::ForwardPayment,
        EventKind::ReceivePayment,
        EventKind::ForwardSuccess,
        EventKind::ReceiveSuccess,
        EventKind::ForwardFail,
        EventKind::ReceiveFail,
        EventKind::NotifyPayment,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payment: PaymentId,
    /// Position along the route of the node handling the event.
    pub hop: u16,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other.time.cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events in (time, insertion order) order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: SimTime, kind: EventKind, payment: PaymentId, hop: u16) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind, payment, hop });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
