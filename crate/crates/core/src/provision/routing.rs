use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{Cidr, NetworkPurpose, ProvisionError};
use crate::topology::DatacenterId;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextHop {
    /// The broker VM of this datacenter.
    Broker(DatacenterId),
    /// The shared-network router of this datacenter.
    SharedRouter(DatacenterId),
    /// Into the WireGuard interface towards the opposite broker.
    Tunnel(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRule {
    pub destination: Cidr,
    pub next_hop: NextHop,
    pub network: NetworkPurpose,
}

/// Static routes of one router: the broker or shared router of a datacenter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTable {
    pub name: String,
    pub datacenter: DatacenterId,
    pub network: NetworkPurpose,
    /// The directly attached subnet.
    pub connected: Cidr,
    pub rules: Vec<RouteRule>,
}

impl RouteTable {
    pub fn new(datacenter: DatacenterId, network: NetworkPurpose, connected: Cidr) -> Self {
        Self { name: format!("{datacenter}-{network}"), datacenter, network, connected, rules: Vec::new() }
    }

    /// Add a rule; a second rule for the same destination is rejected.
    pub fn add(&mut self, destination: Cidr, next_hop: NextHop) -> Result<(), ProvisionError> {
        let destination = destination.network();
        if self.rules.iter().any(|r| r.destination == destination) {
            return Err(ProvisionError::Route(format!(
                "table {} already has a rule for {destination}",
                self.name
            )));
        }
        self.rules.push(RouteRule { destination, next_hop, network: self.network });
        Ok(())
    }

    /// Longest-prefix match.
    pub fn lookup(&self, ip: Ipv4Addr) -> Option<&RouteRule> {
        self.rules
            .iter()
            .filter(|r| r.destination.contains(ip))
            .max_by_key(|r| r.destination.prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hop {
    SharedRouter(DatacenterId),
    Broker(DatacenterId),
    Tunnel,
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hop::SharedRouter(dc) => write!(f, "{dc}-shared-router"),
            Hop::Broker(dc) => write!(f, "{dc}-broker"),
            Hop::Tunnel => f.write_str("tunnel"),
        }
    }
}

const MAX_HOPS: usize = 16;

/// Walk the route tables from the shared router of `from` until a router
/// whose connected subnet contains `dest`.
pub fn trace_route(
    tables: &[RouteTable],
    from: DatacenterId,
    dest: Ipv4Addr,
) -> Result<Vec<Hop>, ProvisionError> {
    let table_for = |hop: Hop| -> Result<&RouteTable, ProvisionError> {
        let (dc, purpose) = match hop {
            Hop::SharedRouter(dc) => (dc, NetworkPurpose::Shared),
            Hop::Broker(dc) => (dc, NetworkPurpose::Broker),
            Hop::Tunnel => unreachable!("tunnel has no table"),
        };
        tables
            .iter()
            .find(|t| t.datacenter == dc && t.network == purpose)
            .ok_or_else(|| ProvisionError::Route(format!("no route table for {hop}")))
    };

    let mut path = vec![Hop::SharedRouter(from)];
    let mut current = Hop::SharedRouter(from);
    while path.len() <= MAX_HOPS {
        let table = table_for(current)?;
        if table.connected.contains(dest) {
            return Ok(path);
        }
        let rule = table
            .lookup(dest)
            .ok_or_else(|| ProvisionError::Route(format!("{dest} unreachable from {current}")))?;
        current = match &rule.next_hop {
            NextHop::Broker(dc) => Hop::Broker(*dc),
            NextHop::SharedRouter(dc) => Hop::SharedRouter(*dc),
            NextHop::Tunnel(_) => {
                path.push(Hop::Tunnel);
                Hop::Broker(table.datacenter.other())
            }
        };
        path.push(current);
    }
    Err(ProvisionError::Route(format!("routing loop towards {dest}")))
}
