//! JSON topology files.
//!
//! The layout is one JSON document with `params`, `nodes` and `channels`; each
//! node and channel sits on its own line so that large instances stay
//! greppable. Money fields are integer cents.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Channel, ChannelId, Node, NodeId, Role, Tier, Topology, TopologyParams};
use crate::units::Money;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed topology document at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("no nodes")]
    NoNodes,
    #[error("nodes[{index}]: {message}")]
    Node { index: usize, message: String },
    #[error("channels[{index}] (id {id}): {message}")]
    Channel { index: usize, id: i64, message: String },
}

#[derive(Serialize)]
struct NodeOut<'a> {
    id: u32,
    tier: Tier,
    role: &'a str,
    country: u16,
}

#[derive(Serialize)]
struct ChannelOut {
    id: u32,
    a: u32,
    b: u32,
    capacity: u64,
    balance_a: u64,
    balance_b: u64,
}

#[derive(Deserialize)]
struct Document {
    #[serde(default)]
    params: Option<TopologyParams>,
    #[serde(default)]
    nodes: Vec<RawNode>,
    #[serde(default)]
    channels: Vec<RawChannel>,
}

#[derive(Deserialize)]
struct RawNode {
    id: i64,
    tier: String,
    role: String,
    country: i64,
}

#[derive(Deserialize)]
struct RawChannel {
    id: i64,
    a: i64,
    b: i64,
    capacity: i64,
    balance_a: i64,
    balance_b: i64,
}

/// Writes the topology as JSON. Locked amounts are not persisted: a file
/// describes a network at rest, so `locked` must be zero.
pub fn serialize_topology(t: &Topology) -> Vec<u8> {
    let mut s = String::with_capacity(64 * (t.nodes.len() + t.channels.len()) + 1024);
    s.push_str("{\n  \"params\": ");
    s.push_str(&serde_json::to_string(&t.params).expect("params serialize"));
    s.push_str(",\n  \"nodes\": [");
    for (i, n) in t.nodes.iter().enumerate() {
        let row = NodeOut { id: n.id.0, tier: n.tier, role: n.role.as_str(), country: n.country };
        let sep = if i == 0 { "\n    " } else { ",\n    " };
        let _ = write!(s, "{sep}{}", serde_json::to_string(&row).expect("node serialize"));
    }
    s.push_str("\n  ],\n  \"channels\": [");
    for (i, c) in t.channels.iter().enumerate() {
        debug_assert!(c.locked.is_zero(), "serializing a channel with in-flight locks");
        let row = ChannelOut {
            id: c.id.0,
            a: c.a.0,
            b: c.b.0,
            capacity: c.capacity.0,
            balance_a: c.balance_a.0,
            balance_b: c.balance_b.0,
        };
        let sep = if i == 0 { "\n    " } else { ",\n    " };
        let _ = write!(s, "{sep}{}", serde_json::to_string(&row).expect("channel serialize"));
    }
    s.push_str("\n  ]\n}\n");
    s.into_bytes()
}

fn tier_from_str(s: &str) -> Option<Tier> {
    match s {
        "CentralBank" => Some(Tier::CentralBank),
        "LSP" => Some(Tier::Lsp),
        "EndUser" => Some(Tier::EndUser),
        _ => None,
    }
}

/// Parses a topology document. Node and channel ids must be unique and dense
/// (0..n in any order); entries are returned sorted by id.
///
/// Structural rules (tiers, connectivity, ...) are not enforced here; run
/// [`super::validate`] on the result for that.
pub fn parse_topology(bytes: &[u8]) -> Result<Topology, ParseError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(ParseError::NoNodes);
    }
    let doc: Document = serde_json::from_slice(bytes).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.nodes.is_empty() {
        return Err(ParseError::NoNodes);
    }

    let n = doc.nodes.len();
    let mut nodes: Vec<Option<Node>> = vec![None; n];
    for (index, raw) in doc.nodes.into_iter().enumerate() {
        let err = |message: String| ParseError::Node { index, message };
        if raw.id < 0 || raw.id as usize >= n {
            return Err(err(format!("id {} out of range 0..{n}", raw.id)));
        }
        let tier = tier_from_str(&raw.tier).ok_or_else(|| err(format!("id {}: unknown tier {:?}", raw.id, raw.tier)))?;
        let role = Role::from_str(&raw.role).ok_or_else(|| err(format!("id {}: unknown role {:?}", raw.id, raw.role)))?;
        if !(0..=u16::MAX as i64).contains(&raw.country) {
            return Err(err(format!("id {}: invalid country {}", raw.id, raw.country)));
        }
        let slot = &mut nodes[raw.id as usize];
        if slot.is_some() {
            return Err(err(format!("duplicate node id {}", raw.id)));
        }
        *slot = Some(Node { id: NodeId(raw.id as u32), tier, role, country: raw.country as u16 });
    }
    let nodes: Vec<Node> = nodes.into_iter().map(|x| x.expect("dense ids checked")).collect();

    let m = doc.channels.len();
    let mut channels: Vec<Option<Channel>> = vec![None; m];
    let mut seen = HashSet::with_capacity(m);
    for (index, raw) in doc.channels.into_iter().enumerate() {
        let err = |message: String| ParseError::Channel { index, id: raw.id, message };
        if raw.id < 0 || raw.id as usize >= m {
            return Err(err(format!("id out of range 0..{m}")));
        }
        if !seen.insert(raw.id) {
            return Err(err("duplicate channel id".into()));
        }
        for (name, v) in [("a", raw.a), ("b", raw.b)] {
            if v < 0 || v as usize >= n {
                return Err(err(format!("endpoint {name}={v} is not a known node")));
            }
        }
        for (name, v) in [("capacity", raw.capacity), ("balance_a", raw.balance_a), ("balance_b", raw.balance_b)] {
            if v < 0 {
                return Err(err(format!("negative {name} {v}")));
            }
        }
        channels[raw.id as usize] = Some(Channel {
            id: ChannelId(raw.id as u32),
            a: NodeId(raw.a as u32),
            b: NodeId(raw.b as u32),
            capacity: Money(raw.capacity as u64),
            balance_a: Money(raw.balance_a as u64),
            balance_b: Money(raw.balance_b as u64),
            locked: Money::ZERO,
        });
    }
    let channels = channels.into_iter().map(|x| x.expect("dense ids checked")).collect();
    Ok(Topology { nodes, channels, params: doc.params })
}
