//! Six-phase hybrid-cloud construction against a pluggable provider.
//!
//! Phase 1 creates the consumer (private) broker network and VM, phase 2 the
//! donor (public) one. Phase 3 runs the five broker-preparation modules and
//! brings up the WireGuard tunnel. Phase 4 creates the shared networks,
//! phase 5 peers them to their brokers, phase 6 installs static routes.

mod cidr;
mod keys;
mod provider;
mod routing;
mod state;
mod wg;

pub use cidr::{Cidr, CidrError};
pub use keys::{generate_keypair, KeyPair};
pub use provider::{
    MockProvider, NetworkPurpose, NetworkRecord, PeeringMechanism, PeeringRecord, Provider,
    ProviderError, ResourceKind, VmRecord,
};
pub use routing::{trace_route, Hop, NextHop, RouteRule, RouteTable};
pub use state::{
    provision_all, run_phase, DeploymentState, LogEvent, PhaseArtifacts, ProvisionFailure,
    Tunnel, TunnelSetup, VpnPlan,
};
pub use wg::{authorize_peer, parse_wg_config, render_wg_config, WgInterfaceConfig, WgPeerEntry};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProvisionError {
    #[error("phase sequencing violation: state is at phase {current}, cannot run phase {requested}")]
    Sequencing { current: u8, requested: u8 },
    #[error("phase {0} does not exist (phases are 1..=6)")]
    UnknownPhase(u8),
    #[error("module ordering violation: {0}")]
    Ordering(String),
    #[error("provider failure in phase {phase}: {source}")]
    Provider {
        phase: u8,
        #[source]
        source: ProviderError,
    },
    #[error("cannot render WireGuard config: {0}")]
    Render(String),
    #[error("WireGuard config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("routing: {0}")]
    Route(String),
}
