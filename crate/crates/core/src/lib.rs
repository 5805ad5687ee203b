//! Deterministic discrete-event simulator of semi-hierarchical payment channel
//! networks (SH-PCNs) with automated channel rebalancing.
//!
//! The crate is split along the simulation pipeline:
//!
//! - [`topology`]: random three-tier network instances and their JSON form.
//! - [`loadgen`]: retail payment requests calibrated on euro-area statistics.
//! - [`engine`]: the event loop driving payments hop by hop.
//! - [`rebalancer`]: waterfall, reverse waterfall and submarine swaps.
//! - [`metrics`]: success rate, latency CDF, per-minute series and costs.
//! - [`sweep`]: the same load over a grid of liquidity levels.

pub mod engine;
pub mod loadgen;
pub mod metrics;
pub mod rebalancer;
pub mod sweep;
pub mod topology;
pub mod units;

use thiserror::Error;

pub use engine::{run, RebalancingMode, SimConfig};
pub use units::{Money, SimDuration, SimTime};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invariant violated at {time}: {message}")]
    Invariant { time: SimTime, message: String },
}
