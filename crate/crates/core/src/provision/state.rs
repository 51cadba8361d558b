use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    authorize_peer, generate_keypair, trace_route, Cidr, KeyPair, NetworkPurpose, NetworkRecord,
    NextHop, PeeringRecord, Provider, ProvisionError, RouteTable, VmRecord, WgInterfaceConfig,
    WgPeerEntry,
};
use crate::seed;
use crate::topology::{DatacenterId, NodeRole, Topology};

pub const LAST_PHASE: u8 = 6;

/// Tunnel addressing. Donor takes `.1`, consumer `.2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VpnPlan {
    pub subnet: Cidr,
    pub listen_port: u16,
}

impl Default for VpnPlan {
    fn default() -> Self {
        Self { subnet: "10.8.0.0/24".parse().expect("static cidr"), listen_port: 51820 }
    }
}

impl VpnPlan {
    pub fn donor_ip(&self) -> Ipv4Addr {
        self.subnet.nth(1)
    }

    pub fn consumer_ip(&self) -> Ipv4Addr {
        self.subnet.nth(2)
    }

    fn interface_address(&self, ip: Ipv4Addr) -> Cidr {
        Cidr { addr: ip, prefix: self.subnet.prefix }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseArtifacts {
    ConsumerBroker { network: NetworkRecord, vm: VmRecord },
    DonorBroker { network: NetworkRecord, vm: VmRecord },
    Tunnel { modules: Vec<String>, donor_public_key: String, consumer_public_key: String, endpoint: String },
    SharedNetworks { private: NetworkRecord, public: NetworkRecord },
    Peerings { private: PeeringRecord, public: PeeringRecord },
    Routes { tables: Vec<RouteTable> },
}

/// Live WireGuard configs of both brokers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tunnel {
    pub donor: WgInterfaceConfig,
    pub consumer: WgInterfaceConfig,
    pub donor_running: bool,
    pub consumer_running: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub phase: u8,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentState {
    pub seed: u64,
    pub topology: Topology,
    pub vpn: VpnPlan,
    pub current_phase: u8,
    pub artifacts: BTreeMap<u8, PhaseArtifacts>,
    /// Key custody of the VM manager.
    pub key_store: BTreeMap<String, KeyPair>,
    pub tunnel: Option<Tunnel>,
    pub log: Vec<LogEvent>,
}

impl DeploymentState {
    pub fn new(topology: Topology, seed: u64) -> Self {
        Self {
            seed,
            topology,
            vpn: VpnPlan::default(),
            current_phase: 0,
            artifacts: BTreeMap::new(),
            key_store: BTreeMap::new(),
            tunnel: None,
            log: Vec::new(),
        }
    }

    fn note(&mut self, phase: u8, message: impl Into<String>) {
        self.log.push(LogEvent { phase, message: message.into() });
    }

    fn broker(&self, dc: DatacenterId) -> Option<(&NetworkRecord, &VmRecord)> {
        let phase = match dc {
            DatacenterId::Private => 1,
            DatacenterId::Public => 2,
        };
        match self.artifacts.get(&phase)? {
            PhaseArtifacts::ConsumerBroker { network, vm } | PhaseArtifacts::DonorBroker { network, vm } => {
                Some((network, vm))
            }
            _ => None,
        }
    }

    fn shared(&self) -> Option<(&NetworkRecord, &NetworkRecord)> {
        match self.artifacts.get(&4)? {
            PhaseArtifacts::SharedNetworks { private, public } => Some((private, public)),
            _ => None,
        }
    }

    pub fn route_tables(&self) -> &[RouteTable] {
        match self.artifacts.get(&6) {
            Some(PhaseArtifacts::Routes { tables }) => tables,
            _ => &[],
        }
    }

    pub fn shared_cidr(&self, dc: DatacenterId) -> Option<Cidr> {
        self.shared().map(|(p, q)| match dc {
            DatacenterId::Private => p.cidr,
            DatacenterId::Public => q.cidr,
        })
    }
}

/// Phase 3 in module order: prepare donor, start donor, prepare consumer,
/// deploy consumer, authorize consumer. The consumer can only be activated
/// once the donor lists its key.
#[derive(Debug, Clone)]
pub struct TunnelSetup {
    plan: VpnPlan,
    donor_vm: VmRecord,
    donor_broker: Cidr,
    donor: Option<WgInterfaceConfig>,
    donor_keys: Option<KeyPair>,
    donor_running: bool,
    consumer: Option<WgInterfaceConfig>,
    consumer_keys: Option<KeyPair>,
    consumer_deployed: bool,
    consumer_running: bool,
    pub modules: Vec<String>,
}

impl TunnelSetup {
    pub fn new(plan: VpnPlan, donor_vm: VmRecord, donor_broker: Cidr) -> Self {
        Self {
            plan,
            donor_vm,
            donor_broker,
            donor: None,
            donor_keys: None,
            donor_running: false,
            consumer: None,
            consumer_keys: None,
            consumer_deployed: false,
            consumer_running: false,
            modules: Vec::new(),
        }
    }

    pub fn donor_config(&self) -> Option<&WgInterfaceConfig> {
        self.donor.as_ref()
    }

    fn order(msg: &str) -> ProvisionError {
        ProvisionError::Ordering(msg.to_string())
    }

    /// Module (i).
    pub fn prepare_donor(&mut self, keys: KeyPair) {
        let cfg = WgInterfaceConfig::new(
            self.plan.interface_address(self.plan.donor_ip()),
            self.plan.listen_port,
            keys.private_b64(),
        );
        self.donor = Some(cfg);
        self.donor_keys = Some(keys);
        self.modules.push("donor-config-preparation".into());
    }

    /// Module (ii): upload wg0 to the donor broker and start it.
    pub fn start_donor(&mut self) -> Result<(), ProvisionError> {
        if self.donor.is_none() {
            return Err(Self::order("donor broker started before its config was prepared"));
        }
        self.donor_running = true;
        self.modules.push("donor-broker-creation".into());
        Ok(())
    }

    /// Module (iii).
    pub fn prepare_consumer(&mut self, keys: KeyPair) -> Result<(), ProvisionError> {
        let donor_keys = self
            .donor_keys
            .as_ref()
            .ok_or_else(|| Self::order("consumer config needs the donor public key"))?;
        let public_ip = self
            .donor_vm
            .public_ip
            .ok_or_else(|| Self::order("donor broker has no public IP"))?;
        let mut cfg = WgInterfaceConfig::new(
            self.plan.interface_address(self.plan.consumer_ip()),
            self.plan.listen_port,
            keys.private_b64(),
        );
        cfg.peers.push(WgPeerEntry {
            public_key: donor_keys.public_b64(),
            allowed_ips: vec![Cidr::host(self.plan.donor_ip()), self.donor_broker.network()],
            endpoint: Some(format!("{public_ip}:{}", self.plan.listen_port)),
        });
        self.consumer = Some(cfg);
        self.consumer_keys = Some(keys);
        self.modules.push("consumer-config-preparation".into());
        Ok(())
    }

    /// Module (iv): upload only; the consumer is not authorized yet.
    pub fn deploy_consumer(&mut self) -> Result<(), ProvisionError> {
        if self.consumer.is_none() {
            return Err(Self::order("consumer broker deployed before its config was prepared"));
        }
        self.consumer_deployed = true;
        self.modules.push("consumer-broker-creation".into());
        Ok(())
    }

    /// Module (v).
    pub fn authorize_consumer(&mut self) -> Result<(), ProvisionError> {
        if !self.donor_running {
            return Err(Self::order("donor broker is not running"));
        }
        let consumer_key = self
            .consumer_keys
            .as_ref()
            .ok_or_else(|| Self::order("consumer keys not generated"))?
            .public_b64();
        let updated = authorize_peer(self.donor.as_ref(), &consumer_key, self.plan.consumer_ip())?;
        self.donor = Some(updated);
        self.modules.push("consumer-broker-authorization".into());
        Ok(())
    }

    pub fn activate_consumer(&mut self) -> Result<(), ProvisionError> {
        if !self.consumer_deployed {
            return Err(Self::order("consumer broker not deployed"));
        }
        let consumer_key = self.consumer_keys.as_ref().map(KeyPair::public_b64).unwrap_or_default();
        let authorized = self
            .donor
            .as_ref()
            .and_then(|d| d.peer(&consumer_key))
            .is_some_and(|p| p.allowed_ips == vec![Cidr::host(self.plan.consumer_ip())]);
        if !authorized {
            return Err(Self::order("consumer broker cannot start WireGuard: not yet authorized by the donor"));
        }
        self.consumer_running = true;
        Ok(())
    }

    pub fn finish(self) -> Result<(Tunnel, PhaseArtifacts, KeyPair, KeyPair), ProvisionError> {
        if !(self.donor_running && self.consumer_running) {
            return Err(Self::order("tunnel is not up on both brokers"));
        }
        let (donor, consumer) = (self.donor.expect("donor"), self.consumer.expect("consumer"));
        let (dk, ck) = (self.donor_keys.expect("donor keys"), self.consumer_keys.expect("consumer keys"));
        let endpoint = consumer.peers[0].endpoint.clone().unwrap_or_default();
        let artifact = PhaseArtifacts::Tunnel {
            modules: self.modules,
            donor_public_key: dk.public_b64(),
            consumer_public_key: ck.public_b64(),
            endpoint,
        };
        let tunnel = Tunnel { donor, consumer, donor_running: true, consumer_running: true };
        Ok((tunnel, artifact, dk, ck))
    }
}

/// Run one phase transactionally: on error the input state is untouched.
pub fn run_phase(
    state: &DeploymentState,
    phase: u8,
    provider: &mut dyn Provider,
) -> Result<DeploymentState, ProvisionError> {
    if !(1..=LAST_PHASE).contains(&phase) {
        return Err(ProvisionError::UnknownPhase(phase));
    }
    if state.current_phase + 1 != phase {
        return Err(ProvisionError::Sequencing { current: state.current_phase, requested: phase });
    }
    let provider_err = |source| ProvisionError::Provider { phase, source };
    let mut next = state.clone();

    let artifact = match phase {
        1 | 2 => {
            let dc = if phase == 1 { DatacenterId::Private } else { DatacenterId::Public };
            let network = provider.create_network(dc, NetworkPurpose::Broker).map_err(provider_err)?;
            let vm = provider.create_vm(&network, NodeRole::BrokerVM).map_err(provider_err)?;
            next.note(phase, format!("{} broker network {} with VM {}", state.topology.datacenter(dc).name, network.cidr, vm.id));
            if phase == 1 {
                PhaseArtifacts::ConsumerBroker { network, vm }
            } else {
                PhaseArtifacts::DonorBroker { network, vm }
            }
        }
        3 => {
            let (donor_net, donor_vm) = state
                .broker(DatacenterId::Public)
                .ok_or_else(|| ProvisionError::Ordering("donor broker missing".into()))?;
            let mut setup = TunnelSetup::new(state.vpn.clone(), donor_vm.clone(), donor_net.cidr);
            setup.prepare_donor(generate_keypair(&mut seed::rng(seed::derive_label(state.seed, "donor-keys"))));
            setup.start_donor()?;
            setup.prepare_consumer(generate_keypair(&mut seed::rng(seed::derive_label(state.seed, "consumer-keys"))))?;
            setup.deploy_consumer()?;
            setup.authorize_consumer()?;
            setup.activate_consumer()?;
            let (tunnel, artifact, dk, ck) = setup.finish()?;
            next.key_store.insert("donor".into(), dk);
            next.key_store.insert("consumer".into(), ck);
            next.tunnel = Some(tunnel);
            next.note(phase, "tunnel up between consumer and donor brokers");
            artifact
        }
        4 => {
            let private = provider
                .create_network(DatacenterId::Private, NetworkPurpose::Shared)
                .map_err(provider_err)?;
            let public = provider
                .create_network(DatacenterId::Public, NetworkPurpose::Shared)
                .map_err(provider_err)?;
            next.note(phase, format!("shared networks {} and {}", private.cidr, public.cidr));
            PhaseArtifacts::SharedNetworks { private, public }
        }
        5 => {
            let (shared_private, shared_public) = state.shared().expect("phase 4 artifacts");
            let (broker_private, _) = state.broker(DatacenterId::Private).expect("phase 1 artifacts");
            let (broker_public, _) = state.broker(DatacenterId::Public).expect("phase 2 artifacts");
            let private = provider.peer_networks(shared_private, broker_private).map_err(provider_err)?;
            let public = provider.peer_networks(shared_public, broker_public).map_err(provider_err)?;
            next.note(phase, format!("peered shared to broker ({:?}, {:?})", private.mechanism, public.mechanism));
            PhaseArtifacts::Peerings { private, public }
        }
        6 => {
            let tables = build_route_tables(state)?;
            let remote_shared = state.shared_cidr(DatacenterId::Public).expect("phase 4 artifacts");
            let tunnel = next.tunnel.as_mut().expect("phase 3 artifacts");
            let donor_peer = &mut tunnel.consumer.peers[0];
            if !donor_peer.allowed_ips.contains(&remote_shared) {
                donor_peer.allowed_ips.push(remote_shared);
            }
            for (from, to) in [(DatacenterId::Private, DatacenterId::Public), (DatacenterId::Public, DatacenterId::Private)] {
                let dest = state.shared_cidr(to).expect("phase 4 artifacts").nth(1);
                let path = trace_route(&tables, from, dest)?;
                next.note(phase, format!("route {from}->{to}: {}", path.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" -> ")));
            }
            PhaseArtifacts::Routes { tables }
        }
        _ => unreachable!(),
    };

    next.artifacts.insert(phase, artifact);
    next.current_phase = phase;
    Ok(next)
}

fn build_route_tables(state: &DeploymentState) -> Result<Vec<RouteTable>, ProvisionError> {
    let vpn = state.vpn.subnet.network();
    let mut tables = Vec::with_capacity(4);
    for dc in [DatacenterId::Private, DatacenterId::Public] {
        let (own_broker, _) = state.broker(dc).expect("broker artifacts");
        let (remote_broker, _) = state.broker(dc.other()).expect("broker artifacts");
        let own_shared = state.shared_cidr(dc).expect("shared artifacts");
        let remote_shared = state.shared_cidr(dc.other()).expect("shared artifacts");

        let mut broker = RouteTable::new(dc, NetworkPurpose::Broker, own_broker.cidr.network());
        broker.add(remote_shared, NextHop::Tunnel("wg0".into()))?;
        broker.add(remote_broker.cidr, NextHop::Tunnel("wg0".into()))?;
        broker.add(own_shared, NextHop::SharedRouter(dc))?;

        let mut shared = RouteTable::new(dc, NetworkPurpose::Shared, own_shared.network());
        shared.add(remote_shared, NextHop::Broker(dc))?;
        shared.add(remote_broker.cidr, NextHop::Broker(dc))?;
        shared.add(vpn, NextHop::Broker(dc))?;

        tables.push(broker);
        tables.push(shared);
    }
    Ok(tables)
}

#[derive(Debug, Error)]
#[error("provisioning stopped in phase {phase}: {error}")]
pub struct ProvisionFailure {
    pub phase: u8,
    pub state: Box<DeploymentState>,
    #[source]
    pub error: ProvisionError,
}

/// Phases 1 through 6 in order.
pub fn provision_all(
    topology: &Topology,
    provider: &mut dyn Provider,
    seed: u64,
) -> Result<DeploymentState, ProvisionFailure> {
    let mut state = DeploymentState::new(topology.clone(), seed);
    for phase in 1..=LAST_PHASE {
        match run_phase(&state, phase, provider) {
            Ok(next) => state = next,
            Err(error) => return Err(ProvisionFailure { phase, state: Box::new(state), error }),
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provision::{render_wg_config, Hop, MockProvider, ResourceKind};

    fn full() -> DeploymentState {
        provision_all(&Topology::default(), &mut MockProvider::new(), 42).unwrap()
    }

    #[test]
    fn phase_one_creates_consumer_broker() {
        let mut p = MockProvider::new();
        let s = run_phase(&DeploymentState::new(Topology::default(), 1), 1, &mut p).unwrap();
        assert_eq!(s.current_phase, 1);
        match &s.artifacts[&1] {
            PhaseArtifacts::ConsumerBroker { network, vm } => {
                assert_eq!(network.datacenter, DatacenterId::Private);
                assert_eq!(vm.role, NodeRole::BrokerVM);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.vms.len(), 1);
    }

    #[test]
    fn consumer_endpoint_is_donor_public_ip() {
        let s = full();
        let donor_ip = match &s.artifacts[&2] {
            PhaseArtifacts::DonorBroker { vm, .. } => vm.public_ip.unwrap(),
            other => panic!("{other:?}"),
        };
        let tunnel = s.tunnel.as_ref().unwrap();
        assert_eq!(tunnel.consumer.peers[0].endpoint.as_deref(), Some(format!("{donor_ip}:51820").as_str()));
        assert_eq!(tunnel.consumer.peers[0].public_key, s.key_store["donor"].public_b64());
        assert_eq!(tunnel.donor.peers.len(), 1);
        assert_eq!(tunnel.donor.peers[0].allowed_ips, vec!["10.8.0.2/32".parse().unwrap()]);
        assert_eq!(tunnel.donor.peers[0].endpoint, None);
    }

    #[test]
    fn out_of_order_phase_is_sequencing_error() {
        let mut p = MockProvider::new();
        let mut s = DeploymentState::new(Topology::default(), 1);
        for phase in 1..=2 {
            s = run_phase(&s, phase, &mut p).unwrap();
        }
        assert_eq!(
            run_phase(&s, 4, &mut p),
            Err(ProvisionError::Sequencing { current: 2, requested: 4 })
        );
        assert!(matches!(run_phase(&s, 2, &mut p), Err(ProvisionError::Sequencing { .. })));
        assert_eq!(run_phase(&s, 7, &mut p), Err(ProvisionError::UnknownPhase(7)));
    }

    #[test]
    fn provider_failure_is_transactional() {
        let mut p = MockProvider::failing_on(DatacenterId::Public, ResourceKind::Network(NetworkPurpose::Broker));
        let failure = provision_all(&Topology::default(), &mut p, 1).unwrap_err();
        assert_eq!(failure.phase, 2);
        assert_eq!(failure.state.current_phase, 1);
        assert!(!failure.state.artifacts.contains_key(&2));
        assert!(matches!(failure.error, ProvisionError::Provider { phase: 2, .. }));

        let mut p = MockProvider::failing_on(DatacenterId::Public, ResourceKind::Peering);
        let failure = provision_all(&Topology::default(), &mut p, 1).unwrap_err();
        assert_eq!(failure.state.current_phase, 4);
    }

    #[test]
    fn full_run_populates_four_tables() {
        let s = full();
        assert_eq!(s.current_phase, 6);
        assert_eq!(s.route_tables().len(), 4);
        assert!((1..=6).all(|k| s.artifacts.contains_key(&k)));
    }

    #[test]
    fn every_shared_subnet_routed_from_other_cloud() {
        let s = full();
        for dc in [DatacenterId::Private, DatacenterId::Public] {
            let cidr = s.shared_cidr(dc).unwrap();
            for t in s.route_tables().iter().filter(|t| t.datacenter == dc.other()) {
                assert!(t.rules.iter().any(|r| r.destination == cidr), "{} lacks {cidr}", t.name);
            }
            let path = trace_route(s.route_tables(), dc.other(), cidr.nth(7)).unwrap();
            assert_eq!(
                path,
                vec![
                    Hop::SharedRouter(dc.other()),
                    Hop::Broker(dc.other()),
                    Hop::Tunnel,
                    Hop::Broker(dc),
                    Hop::SharedRouter(dc)
                ]
            );
        }
    }

    #[test]
    fn same_seed_same_artifacts() {
        let (a, b) = (full(), full());
        assert_eq!(a, b);
        let t = a.tunnel.unwrap();
        assert_eq!(render_wg_config(&t.donor).unwrap(), render_wg_config(&b.tunnel.unwrap().donor).unwrap());
        let other = provision_all(&Topology::default(), &mut MockProvider::new(), 43).unwrap();
        assert_ne!(a.key_store, other.key_store);
    }

    #[test]
    fn consumer_cannot_activate_before_authorization() {
        let plan = VpnPlan::default();
        let mut p = MockProvider::new();
        let net = p.create_network(DatacenterId::Public, NetworkPurpose::Broker).unwrap();
        let vm = p.create_vm(&net, NodeRole::BrokerVM).unwrap();
        let mut setup = TunnelSetup::new(plan, vm, net.cidr);
        setup.prepare_donor(generate_keypair(&mut seed::rng(1)));
        setup.start_donor().unwrap();
        setup.prepare_consumer(generate_keypair(&mut seed::rng(2))).unwrap();
        setup.deploy_consumer().unwrap();
        assert!(matches!(setup.activate_consumer(), Err(ProvisionError::Ordering(_))));
        assert!(setup.clone().finish().is_err());
        setup.authorize_consumer().unwrap();
        setup.activate_consumer().unwrap();
        assert!(setup.finish().is_ok());
    }

    #[test]
    fn consumer_prepared_before_donor_fails() {
        let mut p = MockProvider::new();
        let net = p.create_network(DatacenterId::Public, NetworkPurpose::Broker).unwrap();
        let vm = p.create_vm(&net, NodeRole::BrokerVM).unwrap();
        let mut setup = TunnelSetup::new(VpnPlan::default(), vm, net.cidr);
        assert!(setup.prepare_consumer(generate_keypair(&mut seed::rng(2))).is_err());
        assert!(setup.start_donor().is_err());
        assert!(setup.authorize_consumer().is_err());
    }

    #[test]
    fn state_json_roundtrip() {
        let s = full();
        let json = serde_json::to_string(&s).unwrap();
        let back: DeploymentState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
