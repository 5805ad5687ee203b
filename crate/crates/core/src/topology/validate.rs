use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{ChannelId, NodeId, Role, Tier, Topology};

/// A broken structural rule. Violations are data: [`validate`] collects all of
/// them instead of stopping at the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NodeIdMismatch { index: usize, id: NodeId },
    TierRoleMismatch { node: NodeId },
    CountryOutOfRange { node: NodeId, country: u16 },
    ChannelIdMismatch { index: usize, id: ChannelId },
    UnknownEndpoint { channel: ChannelId, node: NodeId },
    SelfLoop { channel: ChannelId },
    DuplicateChannel { channel: ChannelId, first: ChannelId },
    Conservation { channel: ChannelId },
    EndUserToEndUser { channel: ChannelId },
    EndUserDegree { node: NodeId, degree: usize },
    EndUserNotOnLocalLsp { node: NodeId, channel: ChannelId },
    MissingCentralBankLink { a: NodeId, b: NodeId },
    LspCentralBankLinks { node: NodeId, count: usize },
    Disconnected { unreachable: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NodeIdMismatch { index, id } => write!(f, "node at index {index} has id {id}; ids must be dense"),
            TierRoleMismatch { node } => write!(f, "node {node}: tier inconsistent with role"),
            CountryOutOfRange { node, country } => write!(f, "node {node}: country {country} out of range"),
            ChannelIdMismatch { index, id } => {
                write!(f, "channel at index {index} has id {id}; ids must be dense")
            }
            UnknownEndpoint { channel, node } => write!(f, "channel {channel}: unknown endpoint {node}"),
            SelfLoop { channel } => write!(f, "channel {channel}: endpoints must differ"),
            DuplicateChannel { channel, first } => {
                write!(f, "channel {channel}: duplicates the node pair of {first}")
            }
            Conservation { channel } => {
                write!(f, "channel {channel}: balance_a + balance_b + locked must equal capacity")
            }
            EndUserToEndUser { channel } => write!(f, "channel {channel}: EU–EU channel forbidden"),
            EndUserDegree { node, degree } => {
                write!(f, "end user {node}: has {degree} channels, expected exactly 1")
            }
            EndUserNotOnLocalLsp { node, channel } => {
                write!(f, "end user {node}: channel {channel} must go to an LSP of the same country")
            }
            MissingCentralBankLink { a, b } => write!(f, "central banks {a} and {b} are not linked"),
            LspCentralBankLinks { node, count } => {
                write!(f, "LSP {node}: linked to {count} central banks, expected exactly 1")
            }
            Disconnected { unreachable } => write!(f, "graph is disconnected: {unreachable} nodes unreachable"),
        }
    }
}

/// Checks every structural and accounting rule of an SH-PCN; empty iff valid.
pub fn validate(t: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = t.nodes.len();
    let num_countries = t.num_countries();

    for (i, node) in t.nodes.iter().enumerate() {
        if node.id.index() != i {
            out.push(Violation::NodeIdMismatch { index: i, id: node.id });
        }
        if node.tier != node.role.tier() {
            out.push(Violation::TierRoleMismatch { node: node.id });
        }
        if node.country as usize >= num_countries {
            out.push(Violation::CountryOutOfRange { node: node.id, country: node.country });
        }
    }
    // Everything below indexes nodes by id.
    if out.iter().any(|v| matches!(v, Violation::NodeIdMismatch { .. })) {
        return out;
    }

    let mut pairs: HashMap<(NodeId, NodeId), ChannelId> = HashMap::new();
    let mut degree = vec![0usize; n];
    let mut cb_links = vec![0usize; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ch) in t.channels.iter().enumerate() {
        if ch.id.index() != i {
            out.push(Violation::ChannelIdMismatch { index: i, id: ch.id });
        }
        let mut endpoints_ok = true;
        for node in [ch.a, ch.b] {
            if node.index() >= n {
                out.push(Violation::UnknownEndpoint { channel: ch.id, node });
                endpoints_ok = false;
            }
        }
        if !ch.is_conserved() {
            out.push(Violation::Conservation { channel: ch.id });
        }
        if !endpoints_ok {
            continue;
        }
        if ch.a == ch.b {
            out.push(Violation::SelfLoop { channel: ch.id });
            continue;
        }
        let key = (ch.a.min(ch.b), ch.a.max(ch.b));
        if let Some(&first) = pairs.get(&key) {
            out.push(Violation::DuplicateChannel { channel: ch.id, first });
        } else {
            pairs.insert(key, ch.id);
        }
        adj[ch.a.index()].push(ch.b.index());
        adj[ch.b.index()].push(ch.a.index());

        let (na, nb) = (t.node(ch.a), t.node(ch.b));
        if !(na.role.is_end_user() && nb.role.is_end_user()) {
            degree[ch.a.index()] += 1;
            degree[ch.b.index()] += 1;
        }
        match (na.role.is_end_user(), nb.role.is_end_user()) {
            // Flagged on its own; it does not also count against the EUs' degree.
            (true, true) => {
                out.push(Violation::EndUserToEndUser { channel: ch.id });
                continue;
            }
            (true, false) | (false, true) => {
                let (eu, other) = if na.role.is_end_user() { (na, nb) } else { (nb, na) };
                if other.role != Role::Lsp || other.country != eu.country {
                    out.push(Violation::EndUserNotOnLocalLsp { node: eu.id, channel: ch.id });
                }
            }
            (false, false) => {
                if na.role == Role::Lsp && nb.role == Role::CentralBank {
                    cb_links[na.id.index()] += 1;
                } else if nb.role == Role::Lsp && na.role == Role::CentralBank {
                    cb_links[nb.id.index()] += 1;
                }
            }
        }
    }

    for node in &t.nodes {
        match node.tier {
            Tier::EndUser if degree[node.id.index()] != 1 => {
                out.push(Violation::EndUserDegree { node: node.id, degree: degree[node.id.index()] });
            }
            Tier::Lsp if cb_links[node.id.index()] != 1 => {
                out.push(Violation::LspCentralBankLinks { node: node.id, count: cb_links[node.id.index()] });
            }
            _ => {}
        }
    }

    let cbs: Vec<NodeId> = t.nodes.iter().filter(|x| x.role == Role::CentralBank).map(|x| x.id).collect();
    for (i, &a) in cbs.iter().enumerate() {
        for &b in &cbs[i + 1..] {
            if !pairs.contains_key(&(a.min(b), a.max(b))) {
                out.push(Violation::MissingCentralBankLink { a, b });
            }
        }
    }

    if n > 0 {
        let mut seen = HashSet::with_capacity(n);
        let mut stack = vec![0usize];
        seen.insert(0usize);
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        if seen.len() != n {
            out.push(Violation::Disconnected { unreachable: n - seen.len() });
        }
    }
    out
}
