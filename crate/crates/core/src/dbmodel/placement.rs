use serde::{Deserialize, Serialize};

use super::{ModelError, ReplicationStrategy, ShardCount, StrategyKind};
use crate::seed;
use crate::topology::{build_nodes, manager_node, ClusterConfig, DatacenterId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardRange {
    /// Inclusive lower bound in hash space; the range ends where the next begins.
    pub start: u64,
    pub replicas: Vec<NodeId>,
    pub primary: Option<NodeId>,
}

/// Key-hash ranges and their ordered replica lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardMap {
    pub kind: StrategyKind,
    pub salt: u64,
    pub ranges: Vec<ShardRange>,
    /// SQL front-end for two-phase-commit clusters.
    pub server: Option<NodeId>,
}

pub fn key_hash(key: u64, salt: u64) -> u64 {
    seed::mix64(key ^ salt)
}

impl ShardMap {
    pub fn range_of(&self, key: u64) -> &ShardRange {
        let h = key_hash(key, self.salt);
        let idx = self.ranges.partition_point(|r| r.start <= h) - 1;
        &self.ranges[idx]
    }

    pub fn replicas_of(&self, key: u64) -> &[NodeId] {
        &self.range_of(key).replicas
    }
}

fn boundaries(count: usize) -> impl Iterator<Item = u64> {
    (0..count).map(move |i| ((i as u128) << 64).div_euclid(count as u128) as u64)
}

fn ring(start: usize, n: usize, total: usize) -> Vec<NodeId> {
    (0..n).map(|j| (start + j) % total).collect()
}

/// Node groups of `size`: same-datacenter groups first, leftovers mixed.
fn node_groups(config: ClusterConfig, size: usize) -> Vec<Vec<NodeId>> {
    let nodes = build_nodes(config);
    let of = |dc| nodes.iter().filter(|n| n.datacenter == dc).map(|n| n.node_id).collect::<Vec<_>>();
    let mut groups = Vec::new();
    let mut leftovers = Vec::new();
    for ids in [of(DatacenterId::Private), of(DatacenterId::Public)] {
        let mut chunks = ids.chunks_exact(size);
        groups.extend(chunks.by_ref().map(<[NodeId]>::to_vec));
        leftovers.extend_from_slice(chunks.remainder());
    }
    groups.extend(leftovers.chunks(size).map(<[NodeId]>::to_vec));
    groups
}

/// Deterministic replica placement for `(strategy, config, seed)`.
pub fn place_replicas(
    strategy: &ReplicationStrategy,
    config: ClusterConfig,
    seed: u64,
) -> Result<ShardMap, ModelError> {
    let total = config.total();
    let n = strategy.replica_count;
    let placement = |message: String| ModelError::Placement { kind: strategy.kind, total, message };
    if n > total {
        return Err(placement(format!("needs {n} replicas")));
    }
    strategy.validate(total).map_err(|e| placement(e.to_string()))?;

    let salt = seed::derive_label(seed, "placement");
    let mut server = None;
    let ranges: Vec<ShardRange> = match strategy.kind {
        StrategyKind::MasterSlaveAsync => vec![ShardRange {
            start: 0,
            replicas: (0..total).collect(),
            primary: Some(0),
        }],
        StrategyKind::QuorumPeer | StrategyKind::PeerEventual => boundaries(total)
            .enumerate()
            .map(|(i, start)| {
                let replicas = ring(i, n, total);
                ShardRange { start, primary: Some(replicas[0]), replicas }
            })
            .collect(),
        StrategyKind::LocalQuorumSharded => {
            let shards = match strategy.shard_count {
                ShardCount::Fixed(s) => s,
                ShardCount::Dynamic(_) => unreachable!("validated"),
            };
            boundaries(shards)
                .enumerate()
                .map(|(s, start)| {
                    let replicas = ring(s % total, n, total);
                    ShardRange { start, primary: Some(replicas[0]), replicas }
                })
                .collect()
        }
        StrategyKind::HashShardedMemory => boundaries(total)
            .enumerate()
            .map(|(owner, start)| ShardRange { start, replicas: ring(owner, n, total), primary: Some(owner) })
            .collect(),
        StrategyKind::SyncTwoPhase => {
            if !total.is_multiple_of(n) {
                return Err(placement(format!("{total} data nodes cannot form node groups of {n}")));
            }
            server = Some(manager_node(config).node_id);
            let groups = node_groups(config, n);
            boundaries(groups.len())
                .zip(groups)
                .map(|(start, replicas)| ShardRange { start, primary: Some(replicas[0]), replicas })
                .collect()
        }
    };
    Ok(ShardMap { kind: strategy.kind, salt, ranges, server })
}
