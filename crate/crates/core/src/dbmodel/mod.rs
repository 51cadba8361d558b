//! Parametric replication models for the six benchmarked databases.
//!
//! Each model turns one client operation into a message pattern over the
//! link model and reports the composed latency.

mod exec;
mod placement;
mod strategy;

pub use exec::{execute_op, kth_smallest, latency_upper_bound, OpKind, OpOutcome, OpRequest, OpStatus};
pub use placement::{key_hash, place_replicas, ShardMap, ShardRange};
pub use strategy::{ReplicationStrategy, ShardCount, StrategyConfig, StrategyKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid strategy {kind}: {message}")]
    InvalidStrategy { kind: StrategyKind, message: String },
    #[error("cannot place {kind} replicas on {total} nodes: {message}")]
    Placement { kind: StrategyKind, total: usize, message: String },
}
