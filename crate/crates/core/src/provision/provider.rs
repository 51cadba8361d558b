use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Cidr;
use crate::topology::{DatacenterId, NodeRole};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{datacenter} {kind}: {message}")]
pub struct ProviderError {
    pub datacenter: DatacenterId,
    pub kind: ResourceKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkPurpose {
    Broker,
    Shared,
}

impl fmt::Display for NetworkPurpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkPurpose::Broker => "broker",
            NetworkPurpose::Shared => "shared",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Network(NetworkPurpose),
    Vm,
    Peering,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceKind::Network(p) => write!(f, "{p} network"),
            ResourceKind::Vm => f.write_str("vm"),
            ResourceKind::Peering => f.write_str("peering"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub id: String,
    pub datacenter: DatacenterId,
    pub purpose: NetworkPurpose,
    pub cidr: Cidr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmRecord {
    pub id: String,
    pub datacenter: DatacenterId,
    pub role: NodeRole,
    pub network_id: String,
    pub private_ip: Ipv4Addr,
    pub public_ip: Option<Ipv4Addr>,
}

/// How a shared network is attached to its broker network: an extra router
/// interface on the private side, virtual-network peering on the public side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeeringMechanism {
    InterfaceAttachment,
    VnetPeering,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeeringRecord {
    pub datacenter: DatacenterId,
    pub shared_network: String,
    pub broker_network: String,
    pub mechanism: PeeringMechanism,
}

/// Cloud API used by the provisioning phases.
pub trait Provider {
    fn create_network(
        &mut self,
        datacenter: DatacenterId,
        purpose: NetworkPurpose,
    ) -> Result<NetworkRecord, ProviderError>;

    fn create_vm(
        &mut self,
        network: &NetworkRecord,
        role: NodeRole,
    ) -> Result<VmRecord, ProviderError>;

    fn peer_networks(
        &mut self,
        shared: &NetworkRecord,
        broker: &NetworkRecord,
    ) -> Result<PeeringRecord, ProviderError>;
}

/// In-memory provider with fixed address plans and optional failure injection.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    pub networks: Vec<NetworkRecord>,
    pub vms: Vec<VmRecord>,
    pub peerings: Vec<PeeringRecord>,
    fail_on: Option<(DatacenterId, ResourceKind)>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every request for `kind` in `datacenter` fails.
    pub fn failing_on(datacenter: DatacenterId, kind: ResourceKind) -> Self {
        Self { fail_on: Some((datacenter, kind)), ..Self::default() }
    }

    fn check(&self, datacenter: DatacenterId, kind: ResourceKind) -> Result<(), ProviderError> {
        if self.fail_on == Some((datacenter, kind)) {
            Err(ProviderError { datacenter, kind, message: "injected failure".into() })
        } else {
            Ok(())
        }
    }

    pub fn subnet(datacenter: DatacenterId, purpose: NetworkPurpose) -> Cidr {
        let text = match (datacenter, purpose) {
            (DatacenterId::Private, NetworkPurpose::Broker) => "192.168.100.0/24",
            (DatacenterId::Private, NetworkPurpose::Shared) => "192.168.200.0/24",
            (DatacenterId::Public, NetworkPurpose::Broker) => "10.1.0.0/24",
            (DatacenterId::Public, NetworkPurpose::Shared) => "10.2.0.0/24",
        };
        text.parse().expect("static subnet")
    }

    pub fn public_ip(datacenter: DatacenterId, ordinal: u8) -> Ipv4Addr {
        match datacenter {
            DatacenterId::Private => Ipv4Addr::new(203, 0, 113, 10 + ordinal),
            DatacenterId::Public => Ipv4Addr::new(198, 51, 100, 10 + ordinal),
        }
    }
}

impl Provider for MockProvider {
    fn create_network(
        &mut self,
        datacenter: DatacenterId,
        purpose: NetworkPurpose,
    ) -> Result<NetworkRecord, ProviderError> {
        self.check(datacenter, ResourceKind::Network(purpose))?;
        let record = NetworkRecord {
            id: format!("net-{datacenter}-{purpose}"),
            datacenter,
            purpose,
            cidr: Self::subnet(datacenter, purpose),
        };
        self.networks.push(record.clone());
        Ok(record)
    }

    fn create_vm(&mut self, network: &NetworkRecord, role: NodeRole) -> Result<VmRecord, ProviderError> {
        self.check(network.datacenter, ResourceKind::Vm)?;
        let ordinal = self.vms.iter().filter(|v| v.datacenter == network.datacenter).count() as u8;
        let record = VmRecord {
            id: format!("vm-{}-{}-{ordinal}", network.datacenter, network.purpose),
            datacenter: network.datacenter,
            role,
            network_id: network.id.clone(),
            private_ip: network.cidr.nth(10 + u32::from(ordinal)),
            public_ip: (role == NodeRole::BrokerVM).then(|| Self::public_ip(network.datacenter, ordinal)),
        };
        self.vms.push(record.clone());
        Ok(record)
    }

    fn peer_networks(
        &mut self,
        shared: &NetworkRecord,
        broker: &NetworkRecord,
    ) -> Result<PeeringRecord, ProviderError> {
        self.check(shared.datacenter, ResourceKind::Peering)?;
        let mechanism = match shared.datacenter {
            DatacenterId::Private => PeeringMechanism::InterfaceAttachment,
            DatacenterId::Public => PeeringMechanism::VnetPeering,
        };
        let record = PeeringRecord {
            datacenter: shared.datacenter,
            shared_network: shared.id.clone(),
            broker_network: broker.id.clone(),
            mechanism,
        };
        self.peerings.push(record.clone());
        Ok(record)
    }
}
