//! Semi-hierarchical network structure: central banks (tier 1), LSPs (tier 2)
//! and end users (tier 3), with the channels between them.

mod generate;
mod io;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::units::Money;

pub use generate::{apportion, generate_topology, scaled_europe_params, watts_strogatz_edges};
pub use io::{parse_topology, serialize_topology, ParseError};
pub use validate::{validate, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    CentralBank,
    #[serde(rename = "LSP")]
    Lsp,
    EndUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MerchantSize {
    S,
    M,
    L,
}

impl MerchantSize {
    pub const ALL: [MerchantSize; 3] = [MerchantSize::S, MerchantSize::M, MerchantSize::L];

    pub fn index(self) -> usize {
        match self {
            MerchantSize::S => 0,
            MerchantSize::M => 1,
            MerchantSize::L => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    CentralBank,
    Lsp,
    Citizen,
    Merchant(MerchantSize),
}

impl Role {
    pub fn tier(self) -> Tier {
        match self {
            Role::CentralBank => Tier::CentralBank,
            Role::Lsp => Tier::Lsp,
            Role::Citizen | Role::Merchant(_) => Tier::EndUser,
        }
    }

    pub fn is_end_user(self) -> bool {
        self.tier() == Tier::EndUser
    }

    pub fn is_merchant(self) -> bool {
        matches!(self, Role::Merchant(_))
    }

    pub(crate) fn as_str(self) -> &'static str {
        match self {
            Role::CentralBank => "CB",
            Role::Lsp => "LSP",
            Role::Citizen => "Citizen",
            Role::Merchant(MerchantSize::S) => "Merchant-S",
            Role::Merchant(MerchantSize::M) => "Merchant-M",
            Role::Merchant(MerchantSize::L) => "Merchant-L",
        }
    }

    pub(crate) fn from_str(s: &str) -> Option<Role> {
        Some(match s {
            "CB" => Role::CentralBank,
            "LSP" => Role::Lsp,
            "Citizen" => Role::Citizen,
            "Merchant-S" => Role::Merchant(MerchantSize::S),
            "Merchant-M" => Role::Merchant(MerchantSize::M),
            "Merchant-L" => Role::Merchant(MerchantSize::L),
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub tier: Tier,
    pub role: Role,
    pub country: u16,
}

/// Which side of a channel a value moves away from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::AtoB => Direction::BtoA,
            Direction::BtoA => Direction::AtoB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub id: ChannelId,
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: Money,
    pub balance_a: Money,
    pub balance_b: Money,
    pub locked: Money,
}

impl Channel {
    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.a {
            self.b
        } else {
            self.a
        }
    }

    /// Direction of a transfer sent by `from`.
    pub fn direction_from(&self, from: NodeId) -> Direction {
        if from == self.a {
            Direction::AtoB
        } else {
            Direction::BtoA
        }
    }

    pub fn balance_of(&self, n: NodeId) -> Money {
        if n == self.a {
            self.balance_a
        } else {
            self.balance_b
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.balance_a.0.checked_add(self.balance_b.0).and_then(|s| s.checked_add(self.locked.0))
            == Some(self.capacity.0)
    }
}

/// How LSPs are divided among countries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LspAssignment {
    /// Proportional to country population (largest remainder, at least one per populated country).
    Proportional,
    /// Subset sizes proportional to log-normal(μ, σ) weights drawn per country.
    LogNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    pub num_countries: usize,
    /// Relative country sizes; end users and LSPs are apportioned by these.
    pub country_populations: Vec<u64>,
    pub total_citizens: u64,
    pub citizens_per_merchant: u64,
    pub citizens_per_lsp: u64,
    pub lsp_assignment: LspAssignment,
    pub cb_clique_capacity: Money,
    pub cb_lsp_capacity: Money,
    pub lsp_lsp_capacity: Money,
    pub ws_degree: usize,
    pub ws_rewire_prob: f64,
    pub lognormal_mu: f64,
    pub lognormal_sigma: f64,
    pub citizen_cap: Money,
    /// Channel capacities for (S, M, L) merchants.
    pub merchant_caps: [Money; 3],
    pub merchant_size_shares: [f64; 3],
    pub citizen_initial_balance_fraction: f64,
    pub merchant_initial_balance_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub channels: Vec<Channel>,
    pub params: Option<TopologyParams>,
}

impl Topology {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn channel(&self, id: ChannelId) -> &Channel {
        &self.channels[id.index()]
    }

    pub fn num_countries(&self) -> usize {
        match &self.params {
            Some(p) => p.num_countries,
            None => self.nodes.iter().map(|n| n.country as usize + 1).max().unwrap_or(0),
        }
    }

    pub fn count_role(&self, pred: impl Fn(Role) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(n.role)).count()
    }

    /// Per-node list of (neighbor, channel), neighbors ascending by id.
    pub fn adjacency(&self) -> Vec<Vec<(NodeId, ChannelId)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for ch in &self.channels {
            adj[ch.a.index()].push((ch.b, ch.id));
            adj[ch.b.index()].push((ch.a, ch.id));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Sum of LSP–LSP and CB–LSP channel capacities.
    pub fn total_routing_liquidity(&self) -> Money {
        self.channels
            .iter()
            .filter(|ch| is_routing_channel(self.node(ch.a).role, self.node(ch.b).role))
            .map(|ch| ch.capacity)
            .sum()
    }

    /// Channels whose capacity counts toward routing liquidity.
    pub fn routing_channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels
            .iter()
            .filter(|ch| is_routing_channel(self.node(ch.a).role, self.node(ch.b).role))
    }

    /// Returns a copy with every LSP–LSP and CB–LSP channel resized and re-split 50/50.
    pub fn with_routing_capacities(&self, lsp_lsp: Money, cb_lsp: Money) -> Topology {
        let mut t = self.clone();
        for ch in &mut t.channels {
            let (ra, rb) = (self.nodes[ch.a.index()].role, self.nodes[ch.b.index()].role);
            let cap = match (ra, rb) {
                (Role::Lsp, Role::Lsp) => lsp_lsp,
                (Role::CentralBank, Role::Lsp) | (Role::Lsp, Role::CentralBank) => cb_lsp,
                _ => continue,
            };
            ch.capacity = cap;
            ch.balance_a = Money(cap.0 / 2);
            ch.balance_b = cap - ch.balance_a;
            ch.locked = Money::ZERO;
        }
        if let Some(p) = &mut t.params {
            p.lsp_lsp_capacity = lsp_lsp;
            p.cb_lsp_capacity = cb_lsp;
        }
        t
    }
}

pub fn total_routing_liquidity(t: &Topology) -> Money {
    t.total_routing_liquidity()
}

fn is_routing_channel(a: Role, b: Role) -> bool {
    matches!(
        (a, b),
        (Role::Lsp, Role::Lsp) | (Role::CentralBank, Role::Lsp) | (Role::Lsp, Role::CentralBank)
    )
}
