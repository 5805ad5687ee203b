//! Mutable channel balances during a run.

use crate::topology::{ChannelId, Direction, NodeId, Role, Topology};
use crate::units::Money;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelState {
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: Money,
    /// Spendable balances of `a` and `b`.
    pub balance: [Money; 2],
    /// In-flight amounts, indexed like [`Direction`]: `[a→b, b→a]`.
    pub locked: [Money; 2],
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::AtoB => 0,
        Direction::BtoA => 1,
    }
}

impl ChannelState {
    pub fn side(&self, n: NodeId) -> usize {
        usize::from(n != self.a)
    }

    pub fn balance_of(&self, n: NodeId) -> Money {
        self.balance[self.side(n)]
    }

    pub fn locked_toward(&self, n: NodeId) -> Money {
        // Funds moving toward `a` travel b→a.
        self.locked[1 - self.side(n)]
    }

    pub fn locked_total(&self) -> Money {
        self.locked[0] + self.locked[1]
    }

    pub fn is_conserved(&self) -> bool {
        self.balance[0].0 + self.balance[1].0 + self.locked[0].0 + self.locked[1].0 == self.capacity.0
    }

    /// Moves `amount` from the sender's balance into the in-flight lock.
    /// Returns false, changing nothing, if the sender lacks the balance.
    pub fn lock(&mut self, dir: Direction, amount: Money) -> bool {
        let from = dir_index(dir);
        match self.balance[from].checked_sub(amount) {
            Some(rest) => {
                self.balance[from] = rest;
                self.locked[from] += amount;
                true
            }
            None => false,
        }
    }

    /// Completes a locked transfer: the amount reaches the receiving side.
    pub fn settle(&mut self, dir: Direction, amount: Money) -> Result<(), String> {
        let from = dir_index(dir);
        self.locked[from] = self.locked[from]
            .checked_sub(amount)
            .ok_or_else(|| format!("settling {amount} with only {} locked", self.locked[from]))?;
        self.balance[1 - from] += amount;
        Ok(())
    }

    /// Cancels a locked transfer: the amount returns to the sending side.
    pub fn unlock(&mut self, dir: Direction, amount: Money) -> Result<(), String> {
        let from = dir_index(dir);
        self.locked[from] = self.locked[from]
            .checked_sub(amount)
            .ok_or_else(|| format!("unlocking {amount} with only {} locked", self.locked[from]))?;
        self.balance[from] += amount;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub roles: Vec<Role>,
    pub channels: Vec<ChannelState>,
    /// Neighbors of degree >= 2, ascending by id. Degree-1 nodes can only be
    /// route endpoints, so they are kept out of the search graph.
    pub core_adj: Vec<Vec<(NodeId, ChannelId)>>,
    /// The single channel of each degree-1 node.
    pub leaf_channel: Vec<Option<ChannelId>>,
}

impl Network {
    pub fn new(t: &Topology) -> Self {
        let adj = t.adjacency();
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let core_adj = adj
            .iter()
            .map(|list| list.iter().copied().filter(|(n, _)| degree[n.index()] >= 2).collect())
            .collect();
        let leaf_channel = adj.iter().map(|list| if list.len() == 1 { Some(list[0].1) } else { None }).collect();
        Network {
            roles: t.nodes.iter().map(|n| n.role).collect(),
            channels: t
                .channels
                .iter()
                .map(|c| ChannelState {
                    a: c.a,
                    b: c.b,
                    capacity: c.capacity,
                    balance: [c.balance_a, c.balance_b],
                    locked: [Money::ZERO; 2],
                })
                .collect(),
            core_adj,
            leaf_channel,
        }
    }

    pub fn channel(&self, id: ChannelId) -> &ChannelState {
        &self.channels[id.index()]
    }

    pub fn channel_mut(&mut self, id: ChannelId) -> &mut ChannelState {
        &mut self.channels[id.index()]
    }

    pub fn role(&self, n: NodeId) -> Role {
        self.roles[n.index()]
    }

    /// The channel between two nodes, if any.
    pub fn channel_between(&self, x: NodeId, y: NodeId) -> Option<ChannelId> {
        let joins = |c: ChannelId| {
            let ch = &self.channels[c.index()];
            (ch.a == x && ch.b == y) || (ch.a == y && ch.b == x)
        };
        if let Some(c) = self.leaf_channel[x.index()].or(self.leaf_channel[y.index()]) {
            return joins(c).then_some(c);
        }
        self.core_adj[x.index()].iter().find(|(n, _)| *n == y).map(|&(_, c)| c)
    }

    /// Writes the current balances back into a copy of `t`.
    pub fn snapshot(&self, t: &Topology) -> Topology {
        let mut out = t.clone();
        for (ch, st) in out.channels.iter_mut().zip(&self.channels) {
            ch.balance_a = st.balance[0];
            ch.balance_b = st.balance[1];
            ch.locked = st.locked_total();
        }
        out
    }

    pub fn total_funds(&self) -> Money {
        self.channels.iter().map(|c| c.balance[0] + c.balance[1] + c.locked_total()).sum()
    }
}
