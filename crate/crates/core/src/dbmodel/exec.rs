use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{ReplicationStrategy, ShardMap, StrategyKind};
use crate::netsim::{transfer_time, Direction, LinkModel, NetworkProfile};
use crate::topology::{Cluster, NodeId, NodeSpec};
use crate::workload::RECORD_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Update,
    Insert,
    Scan,
    ReadModifyWrite,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [OpKind::Read, OpKind::Update, OpKind::Insert, OpKind::Scan, OpKind::ReadModifyWrite];

    /// Read-side metrics cover reads and scans, write-side everything that mutates.
    pub fn is_write(self) -> bool {
        matches!(self, OpKind::Update | OpKind::Insert | OpKind::ReadModifyWrite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpStatus {
    Ok,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRequest {
    pub kind: OpKind,
    pub key: u64,
    /// Records returned by a scan; ignored for other kinds.
    pub scan_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpOutcome {
    pub kind: OpKind,
    pub latency_ms: f64,
    pub status: OpStatus,
    pub bytes_moved: u64,
}

/// k-th smallest (1-based) by quickselect.
pub fn kth_smallest(values: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= values.len(), "k = {k} out of range for {} values", values.len());
    let mut scratch = values.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

fn nearest(net: &dyn LinkModel, cluster: &Cluster, from: &NodeSpec, candidates: &[NodeId]) -> NodeId {
    candidates
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let da = net.expected_ms(from, &cluster.node(a));
            let db = net.expected_ms(from, &cluster.node(b));
            da.partial_cmp(&db).unwrap_or(Ordering::Equal)
        })
        .expect("non-empty replica list")
}

struct Ctx<'a> {
    strategy: &'a ReplicationStrategy,
    map: &'a ShardMap,
    cluster: &'a Cluster,
    client: NodeSpec,
}

impl Ctx<'_> {
    fn node(&self, id: NodeId) -> NodeSpec {
        self.cluster.node(id)
    }

    fn server(&self) -> NodeSpec {
        self.node(self.map.server.unwrap_or(self.client.node_id))
    }

    /// Coordinator hop plus the `acks`-th fastest replica answer.
    fn quorum(&self, net: &mut dyn LinkModel, replicas: &[NodeId], acks: usize) -> (f64, NodeId) {
        let coord = nearest(net, self.cluster, &self.client, replicas);
        let coord_node = self.node(coord);
        let hop = net.rtt_ms(&self.client, &coord_node);
        let answers: Vec<f64> = replicas.iter().map(|&r| net.rtt_ms(&coord_node, &self.node(r))).collect();
        (hop + kth_smallest(&answers, acks) + self.strategy.service_time_ms, coord)
    }

    /// Latency of the read pattern and the node that returns the data.
    fn read(&self, net: &mut dyn LinkModel, key: u64) -> (f64, NodeId) {
        let range = self.map.range_of(key);
        let service = self.strategy.service_time_ms;
        match self.strategy.kind {
            StrategyKind::MasterSlaveAsync => {
                let r = nearest(net, self.cluster, &self.client, &range.replicas);
                (net.rtt_ms(&self.client, &self.node(r)) + service, r)
            }
            StrategyKind::QuorumPeer | StrategyKind::PeerEventual | StrategyKind::LocalQuorumSharded => {
                self.quorum(net, &range.replicas, self.strategy.read_acks)
            }
            StrategyKind::HashShardedMemory => {
                let owner = range.primary.expect("slot owner");
                (net.rtt_ms(&self.client, &self.node(owner)) + service, owner)
            }
            StrategyKind::SyncTwoPhase => {
                let server = self.server();
                let hop = net.rtt_ms(&self.client, &server);
                let member = nearest(net, self.cluster, &server, &range.replicas);
                (hop + net.rtt_ms(&server, &self.node(member)) + service, member)
            }
        }
    }

    fn write(&self, net: &mut dyn LinkModel, key: u64) -> f64 {
        let range = self.map.range_of(key);
        let service = self.strategy.service_time_ms;
        match self.strategy.kind {
            StrategyKind::MasterSlaveAsync => {
                let master = self.node(range.primary.expect("master"));
                net.rtt_ms(&self.client, &master) + service
            }
            StrategyKind::QuorumPeer | StrategyKind::PeerEventual | StrategyKind::LocalQuorumSharded => {
                self.quorum(net, &range.replicas, self.strategy.write_acks).0
            }
            StrategyKind::HashShardedMemory => {
                let owner = self.node(range.primary.expect("slot owner"));
                net.rtt_ms(&self.client, &owner) + service
            }
            StrategyKind::SyncTwoPhase => {
                let server = self.server();
                let hop = net.rtt_ms(&self.client, &server);
                let round = range
                    .replicas
                    .iter()
                    .map(|&g| net.rtt_ms(&server, &self.node(g)))
                    .fold(0.0, f64::max);
                hop + 2.0 * round + service
            }
        }
    }
}

/// Compose the latency of one operation issued by `client`.
pub fn execute_op(
    request: &OpRequest,
    strategy: &ReplicationStrategy,
    map: &ShardMap,
    cluster: &Cluster,
    client: &NodeSpec,
    net: &mut dyn LinkModel,
    timeout_ms: f64,
) -> OpOutcome {
    let ctx = Ctx { strategy, map, cluster, client: *client };
    let (latency_ms, bytes_moved) = match request.kind {
        OpKind::Read => (ctx.read(net, request.key).0, RECORD_BYTES),
        OpKind::Update | OpKind::Insert => (ctx.write(net, request.key), RECORD_BYTES),
        OpKind::Scan => {
            let bytes = u64::from(request.scan_len.max(1)) * RECORD_BYTES;
            let (read, server) = ctx.read(net, request.key);
            let from = cluster.datacenter_of(server);
            (read + net.transfer_ms(bytes, from, client.datacenter), bytes)
        }
        OpKind::ReadModifyWrite => {
            let read = ctx.read(net, request.key).0;
            (read + ctx.write(net, request.key), 2 * RECORD_BYTES)
        }
    };
    let status = if latency_ms > timeout_ms { OpStatus::TimedOut } else { OpStatus::Ok };
    OpOutcome { kind: request.kind, latency_ms, status, bytes_moved }
}

/// Upper bound on any single operation's latency under `profile`.
pub fn latency_upper_bound(strategy: &ReplicationStrategy, profile: &NetworkProfile, scan_max: u32) -> f64 {
    let (read_hops, write_hops) = match strategy.kind {
        StrategyKind::MasterSlaveAsync | StrategyKind::HashShardedMemory => (1.0, 1.0),
        StrategyKind::QuorumPeer | StrategyKind::PeerEventual | StrategyKind::LocalQuorumSharded => (2.0, 2.0),
        StrategyKind::SyncTwoPhase => (2.0, 3.0),
    };
    let slowest = [Direction::Up, Direction::Down, Direction::Intra]
        .into_iter()
        .map(|d| transfer_time(u64::from(scan_max) * RECORD_BYTES, d, profile))
        .fold(0.0, f64::max);
    let hop = profile.max_sample_ms();
    (read_hops * hop + strategy.service_time_ms + slowest).max((read_hops + write_hops) * hop + 2.0 * strategy.service_time_ms)
}
