//! Minimum-hop source routing with capacity and exclusion constraints.

use std::collections::VecDeque;

use super::payment::Hop;
use super::state::Network;
use crate::topology::{ChannelId, Direction, NodeId};
use crate::units::Money;

const UNREACHED: u32 = u32::MAX;

/// Reusable search buffers. Distances are tagged with a query stamp so
/// nothing needs clearing between queries.
#[derive(Debug, Default)]
pub struct Router {
    dist: Vec<u32>,
    stamp: Vec<u32>,
    current: u32,
    queue: VecDeque<NodeId>,
}

fn hop_of(net: &Network, channel: ChannelId, from: NodeId) -> Hop {
    let ch = net.channel(channel);
    let (to, dir) = if from == ch.a { (ch.b, Direction::AtoB) } else { (ch.a, Direction::BtoA) };
    Hop { channel, from, to, dir }
}

impl Router {
    pub fn new(nodes: usize) -> Self {
        Router { dist: vec![UNREACHED; nodes], stamp: vec![0; nodes], current: 0, queue: VecDeque::new() }
    }

    fn dist(&self, n: NodeId) -> u32 {
        if self.stamp[n.index()] == self.current {
            self.dist[n.index()]
        } else {
            UNREACHED
        }
    }

    fn set_dist(&mut self, n: NodeId, d: u32) {
        self.stamp[n.index()] = self.current;
        self.dist[n.index()] = d;
    }

    /// Shortest route from `src` to `dst` such that every hop can carry
    /// `amount`, the first hop's sender holds at least `amount`, and no hop is
    /// excluded. Among shortest routes the one with the smallest next-node id
    /// at each step wins.
    pub fn find_path(
        &mut self,
        net: &Network,
        src: NodeId,
        dst: NodeId,
        amount: Money,
        excluded: &[(ChannelId, Direction)],
    ) -> Option<Vec<Hop>> {
        if src == dst {
            return None;
        }
        if self.dist.len() < net.roles.len() {
            *self = Router::new(net.roles.len());
        }
        let usable = |h: &Hop, first: bool| {
            let ch = net.channel(h.channel);
            ch.capacity >= amount
                && !excluded.contains(&(h.channel, h.dir))
                && (!first || ch.balance_of(h.from) >= amount)
        };

        let mut prefix = None;
        let mut start = src;
        if let Some(c) = net.leaf_channel[src.index()] {
            let h = hop_of(net, c, src);
            if !usable(&h, true) {
                return None;
            }
            if h.to == dst {
                return Some(vec![h]);
            }
            prefix = Some(h);
            start = h.to;
        }
        let mut suffix = None;
        let mut target = dst;
        if let Some(c) = net.leaf_channel[dst.index()] {
            let ch = net.channel(c);
            let h = hop_of(net, c, if ch.a == dst { ch.b } else { ch.a });
            if !usable(&h, start == h.from && prefix.is_none()) {
                return None;
            }
            suffix = Some(h);
            target = h.from;
        }
        let mut route: Vec<Hop> = prefix.into_iter().collect();
        if start != target {
            if net.leaf_channel[start.index()].is_some() || net.leaf_channel[target.index()].is_some() {
                // A leaf in the middle of a route means the endpoints hang off
                // different leaves with no core between them.
                return None;
            }
            route.extend(self.core_path(net, start, target, prefix.is_none(), &usable)?);
        }
        route.extend(suffix);
        Some(route)
    }

    /// Shortest core path; `first_is_source` applies the balance check to the
    /// edges leaving `start`.
    fn core_path(
        &mut self,
        net: &Network,
        start: NodeId,
        target: NodeId,
        first_is_source: bool,
        usable: &dyn Fn(&Hop, bool) -> bool,
    ) -> Option<Vec<Hop>> {
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.current = 1;
        }
        // Backward BFS from the target. The start node is never expanded, so
        // distances describe paths that avoid it.
        self.queue.clear();
        self.set_dist(target, 0);
        self.queue.push_back(target);
        while let Some(y) = self.queue.pop_front() {
            let dy = self.dist(y);
            for &(x, c) in &net.core_adj[y.index()] {
                if x == start || self.dist(x) != UNREACHED {
                    continue;
                }
                if usable(&hop_of(net, c, x), false) {
                    self.set_dist(x, dy + 1);
                    self.queue.push_back(x);
                }
            }
        }
        // Forward greedy walk: each step takes the smallest-id neighbor one
        // step closer to the target.
        let mut best: Option<(u32, Hop)> = None;
        for &(y, c) in &net.core_adj[start.index()] {
            let d = self.dist(y);
            if d == UNREACHED {
                continue;
            }
            let h = hop_of(net, c, start);
            if usable(&h, first_is_source) && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, h));
            }
        }
        let (mut d, first) = best?;
        let mut route = vec![first];
        let mut at = first.to;
        while d > 0 {
            let next = net.core_adj[at.index()].iter().find_map(|&(y, c)| {
                let h = hop_of(net, c, at);
                (self.dist(y) == d - 1 && y != start && usable(&h, false)).then_some(h)
            })?;
            route.push(next);
            at = next.to;
            d -= 1;
        }
        Some(route)
    }
}
