use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum StrategyKind {
    /// MongoDB-like: one master takes writes, any replica serves reads.
    MasterSlaveAsync,
    /// Cassandra-like: coordinator waits for a quorum of ring replicas.
    QuorumPeer,
    /// Riak-like: masterless ring with configurable ack count.
    PeerEventual,
    /// CouchDB-like: fixed shard count, quorum over each shard's replicas.
    LocalQuorumSharded,
    /// Redis-Cluster-like: hash slots with a single owner on the request path.
    HashShardedMemory,
    /// MySQL-Cluster-like: node groups committed with two-phase commit.
    SyncTwoPhase,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::MasterSlaveAsync,
        StrategyKind::QuorumPeer,
        StrategyKind::PeerEventual,
        StrategyKind::LocalQuorumSharded,
        StrategyKind::HashShardedMemory,
        StrategyKind::SyncTwoPhase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::MasterSlaveAsync => "MasterSlaveAsync",
            StrategyKind::QuorumPeer => "QuorumPeer",
            StrategyKind::PeerEventual => "PeerEventual",
            StrategyKind::LocalQuorumSharded => "LocalQuorumSharded",
            StrategyKind::HashShardedMemory => "HashShardedMemory",
            StrategyKind::SyncTwoPhase => "SyncTwoPhase",
        }
    }

    /// The database this model stands in for.
    pub fn database(self) -> &'static str {
        match self {
            StrategyKind::MasterSlaveAsync => "mongodb",
            StrategyKind::QuorumPeer => "cassandra",
            StrategyKind::PeerEventual => "riak",
            StrategyKind::LocalQuorumSharded => "couchdb",
            StrategyKind::HashShardedMemory => "redis",
            StrategyKind::SyncTwoPhase => "mysql",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s) || k.database().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Accepts the kind name or the database it stands for.
impl<'de> Deserialize<'de> for StrategyKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShardCount {
    Fixed(usize),
    Dynamic(DynamicTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicTag {
    Dynamic,
}

impl ShardCount {
    pub const DYNAMIC: ShardCount = ShardCount::Dynamic(DynamicTag::Dynamic);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStrategy {
    pub kind: StrategyKind,
    pub replica_count: usize,
    pub write_acks: usize,
    pub read_acks: usize,
    pub shard_count: ShardCount,
    pub service_time_ms: f64,
}

pub const COUCH_SHARDS: usize = 8;
pub const DEFAULT_SERVICE_MS: f64 = 1.0;
pub const MEMORY_SERVICE_MS: f64 = 0.1;

impl ReplicationStrategy {
    /// Default settings for a cluster of `total` data nodes.
    pub fn default_for(kind: StrategyKind, total: usize) -> Self {
        let quorum = |n: usize| n / 2 + 1;
        let (replica_count, write_acks, read_acks, shard_count, service_time_ms) = match kind {
            StrategyKind::MasterSlaveAsync => (total, 1, 1, ShardCount::DYNAMIC, DEFAULT_SERVICE_MS),
            StrategyKind::QuorumPeer | StrategyKind::PeerEventual => {
                (3, quorum(3), quorum(3), ShardCount::DYNAMIC, DEFAULT_SERVICE_MS)
            }
            StrategyKind::LocalQuorumSharded => {
                (3, quorum(3), quorum(3), ShardCount::Fixed(COUCH_SHARDS), DEFAULT_SERVICE_MS)
            }
            StrategyKind::HashShardedMemory => (total, 1, 1, ShardCount::DYNAMIC, MEMORY_SERVICE_MS),
            StrategyKind::SyncTwoPhase => (2, 2, 1, ShardCount::DYNAMIC, DEFAULT_SERVICE_MS),
        };
        Self { kind, replica_count, write_acks, read_acks, shard_count, service_time_ms }
    }

    pub fn validate(&self, total: usize) -> Result<(), ModelError> {
        let fail = |message: String| Err(ModelError::InvalidStrategy { kind: self.kind, message });
        let n = self.replica_count;
        if n == 0 || n > total {
            return fail(format!("replica_count {n} must be in 1..={total}"));
        }
        for (name, k) in [("read_acks", self.read_acks), ("write_acks", self.write_acks)] {
            if k == 0 || k > n {
                return fail(format!("{name} {k} must be in 1..={n}"));
            }
        }
        if !(self.service_time_ms >= 0.0 && self.service_time_ms.is_finite()) {
            return fail(format!("service_time_ms {} must be a non-negative number", self.service_time_ms));
        }
        match (self.kind, self.shard_count) {
            (_, ShardCount::Fixed(0)) => fail("shard_count must be positive".into()),
            (StrategyKind::LocalQuorumSharded, ShardCount::Dynamic(_)) => {
                fail("LocalQuorumSharded needs a fixed shard_count".into())
            }
            (StrategyKind::MasterSlaveAsync | StrategyKind::HashShardedMemory, _) if n != total => {
                fail(format!("replica_count must equal the node count {total} (full replication)"))
            }
            _ => Ok(()),
        }
    }
}

/// Strategy as written in an experiment file: a kind plus optional overrides.
/// A bare string names the kind with all defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StrategyConfigRepr")]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replica_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub write_acks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub read_acks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shard_count: Option<ShardCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service_time_ms: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StrategyConfigRepr {
    Name(StrategyKind),
    Full {
        kind: StrategyKind,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        replica_count: Option<usize>,
        #[serde(default)]
        write_acks: Option<usize>,
        #[serde(default)]
        read_acks: Option<usize>,
        #[serde(default)]
        shard_count: Option<ShardCount>,
        #[serde(default)]
        service_time_ms: Option<f64>,
    },
}

impl From<StrategyConfigRepr> for StrategyConfig {
    fn from(r: StrategyConfigRepr) -> Self {
        match r {
            StrategyConfigRepr::Name(kind) => StrategyConfig::from(kind),
            StrategyConfigRepr::Full { kind, label, replica_count, write_acks, read_acks, shard_count, service_time_ms } => {
                StrategyConfig { kind, label, replica_count, write_acks, read_acks, shard_count, service_time_ms }
            }
        }
    }
}

impl From<StrategyKind> for StrategyConfig {
    fn from(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            label: None,
            replica_count: None,
            write_acks: None,
            read_acks: None,
            shard_count: None,
            service_time_ms: None,
        }
    }
}

impl StrategyConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.to_string())
    }

    pub fn resolve(&self, total: usize) -> Result<ReplicationStrategy, ModelError> {
        let mut s = ReplicationStrategy::default_for(self.kind, total);
        if let Some(n) = self.replica_count {
            s.replica_count = n;
            // keep quorum defaults consistent with an overridden N
            if matches!(self.kind, StrategyKind::QuorumPeer | StrategyKind::PeerEventual | StrategyKind::LocalQuorumSharded) {
                s.read_acks = n / 2 + 1;
                s.write_acks = n / 2 + 1;
            }
            if self.kind == StrategyKind::SyncTwoPhase {
                s.write_acks = n;
            }
        }
        if let Some(w) = self.write_acks {
            s.write_acks = w;
        }
        if let Some(r) = self.read_acks {
            s.read_acks = r;
        }
        if let Some(c) = self.shard_count {
            s.shard_count = c;
        }
        if let Some(t) = self.service_time_ms {
            s.service_time_ms = t;
        }
        s.validate(total)?;
        Ok(s)
    }
}
