//! Hybrid cluster layout: the two datacenters and the `(n, m)` split of data
//! nodes swept by every experiment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOTAL_NODES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid topology: total node count {0} is below the minimum of 2")]
    TooFewNodes(usize),
    #[error("invalid cluster config {n_local}_{m_remote}: at least one private node is required")]
    NoPrivateNode { n_local: usize, m_remote: usize },
    #[error("cannot parse cluster config label `{0}` (expected `n_m`)")]
    BadLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatacenterId {
    Private,
    Public,
}

impl DatacenterId {
    pub fn other(self) -> Self {
        match self {
            DatacenterId::Private => DatacenterId::Public,
            DatacenterId::Public => DatacenterId::Private,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatacenterId::Private => "private",
            DatacenterId::Public => "public",
        }
    }
}

impl fmt::Display for DatacenterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datacenter {
    pub id: DatacenterId,
    pub name: String,
}

/// The pair of datacenters making up one hybrid cloud. Exactly two exist by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub private: Datacenter,
    pub public: Datacenter,
    #[serde(default = "default_total")]
    pub total: usize,
}

fn default_total() -> usize {
    DEFAULT_TOTAL_NODES
}

impl Default for Topology {
    fn default() -> Self {
        Self::new("openstack-local", "azure-east-us", DEFAULT_TOTAL_NODES)
    }
}

impl Topology {
    pub fn new(private_name: &str, public_name: &str, total: usize) -> Self {
        Self {
            private: Datacenter { id: DatacenterId::Private, name: private_name.to_string() },
            public: Datacenter { id: DatacenterId::Public, name: public_name.to_string() },
            total,
        }
    }

    pub fn datacenter(&self, id: DatacenterId) -> &Datacenter {
        match id {
            DatacenterId::Private => &self.private,
            DatacenterId::Public => &self.public,
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.total < 2 {
            return Err(TopologyError::TooFewNodes(self.total));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRole {
    DataNode,
    BrokerVM,
    ManagerVM,
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub datacenter: DatacenterId,
    pub role: NodeRole,
}

impl NodeSpec {
    pub fn data(node_id: NodeId, datacenter: DatacenterId) -> Self {
        Self { node_id, datacenter, role: NodeRole::DataNode }
    }
}

/// `n_local` data nodes in the private cloud, `m_remote` in the public cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterConfig {
    pub n_local: usize,
    pub m_remote: usize,
}

impl ClusterConfig {
    pub fn new(n_local: usize, m_remote: usize) -> Result<Self, TopologyError> {
        if n_local + m_remote < 2 {
            return Err(TopologyError::TooFewNodes(n_local + m_remote));
        }
        if n_local == 0 {
            return Err(TopologyError::NoPrivateNode { n_local, m_remote });
        }
        Ok(Self { n_local, m_remote })
    }

    pub fn total(&self) -> usize {
        self.n_local + self.m_remote
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.n_local, self.m_remote)
    }

    pub fn is_bursting(&self) -> bool {
        self.m_remote > 0
    }
}

impl fmt::Display for ClusterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.n_local, self.m_remote)
    }
}

impl FromStr for ClusterConfig {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TopologyError::BadLabel(s.to_string());
        let (n, m) = s.split_once(['_', ',']).ok_or_else(bad)?;
        let n = n.trim().trim_start_matches('(').parse().map_err(|_| bad())?;
        let m = m.trim().trim_end_matches(')').parse().map_err(|_| bad())?;
        ClusterConfig::new(n, m)
    }
}

impl Serialize for ClusterConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for ClusterConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sweep from non-bursting `(total, 0)` to full-bursting `(1, total - 1)`.
pub fn enumerate_configs(total: usize) -> Result<Vec<ClusterConfig>, TopologyError> {
    if total < 2 {
        return Err(TopologyError::TooFewNodes(total));
    }
    Ok((0..total)
        .map(|m| ClusterConfig { n_local: total - m, m_remote: m })
        .collect())
}

/// Data nodes for a config, ids assigned private-first.
pub fn build_nodes(config: ClusterConfig) -> Vec<NodeSpec> {
    (0..config.total())
        .map(|id| {
            let dc = if id < config.n_local { DatacenterId::Private } else { DatacenterId::Public };
            NodeSpec::data(id, dc)
        })
        .collect()
}

/// The private VM hosting the VM manager, the SQL cluster manager/server and
/// the benchmark client. Its id follows the data nodes.
pub fn manager_node(config: ClusterConfig) -> NodeSpec {
    NodeSpec {
        node_id: config.total(),
        datacenter: DatacenterId::Private,
        role: NodeRole::ManagerVM,
    }
}

/// Data nodes plus the manager VM, indexable by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub config: ClusterConfig,
    nodes: Vec<NodeSpec>,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Self {
        let mut nodes = build_nodes(config);
        nodes.push(manager_node(config));
        Self { config, nodes }
    }

    pub fn data_nodes(&self) -> &[NodeSpec] {
        &self.nodes[..self.config.total()]
    }

    pub fn manager(&self) -> NodeSpec {
        self.nodes[self.config.total()]
    }

    pub fn node(&self, id: NodeId) -> NodeSpec {
        self.nodes[id]
    }

    pub fn datacenter_of(&self, id: NodeId) -> DatacenterId {
        self.nodes[id].datacenter
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(v: &[ClusterConfig]) -> Vec<(usize, usize)> {
        v.iter().map(|c| (c.n_local, c.m_remote)).collect()
    }

    #[test]
    fn enumerate_eight() {
        let got = enumerate_configs(8).unwrap();
        assert_eq!(
            pairs(&got),
            vec![(8, 0), (7, 1), (6, 2), (5, 3), (4, 4), (3, 5), (2, 6), (1, 7)]
        );
        assert!(!got.first().unwrap().is_bursting());
        assert_eq!(got.last().unwrap().label(), "1_7");
    }

    #[test]
    fn enumerate_small() {
        assert_eq!(pairs(&enumerate_configs(2).unwrap()), vec![(2, 0), (1, 1)]);
        assert_eq!(pairs(&enumerate_configs(3).unwrap()), vec![(3, 0), (2, 1), (1, 2)]);
        assert_eq!(enumerate_configs(1), Err(TopologyError::TooFewNodes(1)));
        assert_eq!(enumerate_configs(0), Err(TopologyError::TooFewNodes(0)));
    }

    #[test]
    fn build_nodes_examples() {
        let all_local = build_nodes(ClusterConfig::new(8, 0).unwrap());
        assert!(all_local.iter().all(|n| n.datacenter == DatacenterId::Private));

        let full = build_nodes(ClusterConfig::new(1, 7).unwrap());
        assert_eq!(full[0].datacenter, DatacenterId::Private);
        assert!(full[1..].iter().all(|n| n.datacenter == DatacenterId::Public));

        let half = build_nodes(ClusterConfig::new(4, 4).unwrap());
        let ids: Vec<_> = half
            .iter()
            .filter(|n| n.datacenter == DatacenterId::Private)
            .map(|n| n.node_id)
            .collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn label_parsing() {
        let c: ClusterConfig = "3_5".parse().unwrap();
        assert_eq!((c.n_local, c.m_remote), (3, 5));
        assert_eq!("(6,2)".parse::<ClusterConfig>().unwrap().label(), "6_2");
        assert!("0_8".parse::<ClusterConfig>().is_err());
        assert!("x".parse::<ClusterConfig>().is_err());
    }

    #[test]
    fn manager_is_private_and_after_data_nodes() {
        let c = Cluster::new(ClusterConfig::new(1, 7).unwrap());
        assert_eq!(c.manager().node_id, 8);
        assert_eq!(c.manager().datacenter, DatacenterId::Private);
        assert_eq!(c.manager().role, NodeRole::ManagerVM);
        assert_eq!(c.data_nodes().len(), 8);
    }

    proptest! {
        #[test]
        fn configs_conserve_total(total in 2usize..64) {
            let configs = enumerate_configs(total).unwrap();
            prop_assert_eq!(configs.len(), total);
            for c in configs {
                prop_assert_eq!(c.total(), total);
                prop_assert!(c.n_local >= 1);
                let nodes = build_nodes(c);
                prop_assert_eq!(nodes.clone(), build_nodes(c));
                let private = nodes.iter().filter(|n| n.datacenter == DatacenterId::Private).count();
                prop_assert_eq!(private, c.n_local);
                prop_assert!(nodes.iter().enumerate().all(|(i, n)| n.node_id == i));
            }
        }
    }
}
