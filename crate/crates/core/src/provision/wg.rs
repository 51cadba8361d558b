//! WireGuard `wg0` interface files.

use serde::{Deserialize, Serialize};

use super::{Cidr, ProvisionError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WgPeerEntry {
    pub public_key: String,
    pub allowed_ips: Vec<Cidr>,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WgInterfaceConfig {
    pub name: String,
    pub interface_address: Cidr,
    pub listen_port: u16,
    pub private_key: Option<String>,
    pub peers: Vec<WgPeerEntry>,
}

impl WgInterfaceConfig {
    pub fn new(interface_address: Cidr, listen_port: u16, private_key: impl Into<String>) -> Self {
        Self {
            name: "wg0".to_string(),
            interface_address,
            listen_port,
            private_key: Some(private_key.into()),
            peers: Vec::new(),
        }
    }

    pub fn peer(&self, public_key: &str) -> Option<&WgPeerEntry> {
        self.peers.iter().find(|p| p.public_key == public_key)
    }
}

fn join_ips(ips: &[Cidr]) -> String {
    ips.iter().map(Cidr::to_string).collect::<Vec<_>>().join(", ")
}

pub fn render_wg_config(cfg: &WgInterfaceConfig) -> Result<String, ProvisionError> {
    let key = cfg
        .private_key
        .as_deref()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| ProvisionError::Render(format!("interface {} has no private key", cfg.name)))?;
    let mut out = String::new();
    out.push_str("[Interface]\n");
    out.push_str(&format!("Address = {}\n", cfg.interface_address));
    out.push_str(&format!("ListenPort = {}\n", cfg.listen_port));
    out.push_str(&format!("PrivateKey = {key}\n"));
    for peer in &cfg.peers {
        if peer.allowed_ips.is_empty() {
            return Err(ProvisionError::Render(format!("peer {} has no AllowedIPs", peer.public_key)));
        }
        out.push_str("\n[Peer]\n");
        out.push_str(&format!("PublicKey = {}\n", peer.public_key));
        out.push_str(&format!("AllowedIPs = {}\n", join_ips(&peer.allowed_ips)));
        if let Some(endpoint) = &peer.endpoint {
            out.push_str(&format!("Endpoint = {endpoint}\n"));
        }
    }
    Ok(out)
}

/// Parse the subset of the WireGuard format written by [`render_wg_config`].
pub fn parse_wg_config(name: &str, text: &str) -> Result<WgInterfaceConfig, ProvisionError> {
    enum Section {
        None,
        Interface,
        Peer,
    }

    let err = |line: usize, message: String| ProvisionError::Parse { line, message };
    let mut section = Section::None;
    let mut seen_interface = false;
    let mut address = None;
    let mut port = None;
    let mut private_key = None;
    let mut peers: Vec<WgPeerEntry> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[Interface]" => {
                if seen_interface {
                    return Err(err(lineno, "duplicate [Interface] section".into()));
                }
                seen_interface = true;
                section = Section::Interface;
                continue;
            }
            "[Peer]" => {
                peers.push(WgPeerEntry { public_key: String::new(), allowed_ips: Vec::new(), endpoint: None });
                section = Section::Peer;
                continue;
            }
            _ => {}
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(lineno, format!("expected `Key = Value`, got `{line}`")))?;
        match (&section, key) {
            (Section::Interface, "Address") => {
                address = Some(value.parse::<Cidr>().map_err(|e| err(lineno, e.to_string()))?)
            }
            (Section::Interface, "ListenPort") => {
                port = Some(value.parse::<u16>().map_err(|e| err(lineno, e.to_string()))?)
            }
            (Section::Interface, "PrivateKey") => private_key = Some(value.to_string()),
            (Section::Peer, "PublicKey") => {
                peers.last_mut().expect("peer section").public_key = value.to_string()
            }
            (Section::Peer, "AllowedIPs") => {
                let ips = value
                    .split(',')
                    .map(|s| s.parse::<Cidr>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| err(lineno, e.to_string()))?;
                peers.last_mut().expect("peer section").allowed_ips = ips;
            }
            (Section::Peer, "Endpoint") => {
                peers.last_mut().expect("peer section").endpoint = Some(value.to_string())
            }
            (Section::None, _) => return Err(err(lineno, format!("`{key}` outside of a section"))),
            (_, other) => return Err(err(lineno, format!("unsupported key `{other}`"))),
        }
    }

    if !seen_interface {
        return Err(err(0, "missing [Interface] section".into()));
    }
    if let Some(i) = peers.iter().position(|p| p.public_key.is_empty()) {
        return Err(err(0, format!("peer #{} has no PublicKey", i + 1)));
    }
    Ok(WgInterfaceConfig {
        name: name.to_string(),
        interface_address: address.ok_or_else(|| err(0, "missing Address".into()))?,
        listen_port: port.ok_or_else(|| err(0, "missing ListenPort".into()))?,
        private_key,
        peers,
    })
}

/// Grant a consumer access to the donor tunnel: add its key with
/// `AllowedIPs = <consumer_vpn_ip>/32`. Re-authorizing is a no-op.
pub fn authorize_peer(
    donor: Option<&WgInterfaceConfig>,
    consumer_public_key: &str,
    consumer_vpn_ip: std::net::Ipv4Addr,
) -> Result<WgInterfaceConfig, ProvisionError> {
    let donor = donor.ok_or_else(|| {
        ProvisionError::Ordering("cannot authorize a consumer before the donor broker exists".into())
    })?;
    let mut updated = donor.clone();
    let allowed = vec![Cidr::host(consumer_vpn_ip)];
    match updated.peers.iter_mut().find(|p| p.public_key == consumer_public_key) {
        Some(existing) => existing.allowed_ips = allowed,
        None => updated.peers.push(WgPeerEntry {
            public_key: consumer_public_key.to_string(),
            allowed_ips: allowed,
            endpoint: None,
        }),
    }
    Ok(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KEY_A: &str = "yAnz5TF+lXXJte14tji3zlMNq+hd2rYUIgJBgB3fBmk=";
    const KEY_B: &str = "xTIBA5rboUvnH4htodjb6e697QjLERt1NAB4mZqp8Dg=";

    fn donor() -> WgInterfaceConfig {
        WgInterfaceConfig::new("10.8.0.1/24".parse().unwrap(), 51820, KEY_A)
    }

    #[test]
    fn donor_before_authorization_has_no_peers() {
        let text = render_wg_config(&donor()).unwrap();
        assert_eq!(
            text,
            format!("[Interface]\nAddress = 10.8.0.1/24\nListenPort = 51820\nPrivateKey = {KEY_A}\n")
        );
        assert!(!text.contains("[Peer]"));
    }

    #[test]
    fn consumer_peer_has_endpoint() {
        let mut consumer = WgInterfaceConfig::new("10.8.0.2/24".parse().unwrap(), 51820, KEY_B);
        consumer.peers.push(WgPeerEntry {
            public_key: KEY_A.into(),
            allowed_ips: vec!["10.8.0.1/32".parse().unwrap(), "10.1.0.0/24".parse().unwrap()],
            endpoint: Some("198.51.100.10:51820".into()),
        });
        let text = render_wg_config(&consumer).unwrap();
        assert!(text.ends_with(
            "\n[Peer]\nPublicKey = yAnz5TF+lXXJte14tji3zlMNq+hd2rYUIgJBgB3fBmk=\nAllowedIPs = 10.8.0.1/32, 10.1.0.0/24\nEndpoint = 198.51.100.10:51820\n"
        ));
        assert_eq!(parse_wg_config("wg0", &text).unwrap(), consumer);
    }

    #[test]
    fn missing_private_key_fails() {
        let mut cfg = donor();
        cfg.private_key = None;
        assert!(matches!(render_wg_config(&cfg), Err(ProvisionError::Render(_))));
    }

    #[test]
    fn authorize_is_idempotent() {
        let ip = "10.8.0.2".parse().unwrap();
        let once = authorize_peer(Some(&donor()), KEY_B, ip).unwrap();
        assert_eq!(once.peers.len(), 1);
        assert_eq!(once.peers[0].allowed_ips, vec!["10.8.0.2/32".parse().unwrap()]);
        assert_eq!(once.peers[0].endpoint, None);
        let twice = authorize_peer(Some(&once), KEY_B, ip).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn authorize_without_donor_is_ordering_error() {
        let r = authorize_peer(None, KEY_B, "10.8.0.2".parse().unwrap());
        assert!(matches!(r, Err(ProvisionError::Ordering(_))));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_wg_config("wg0", "Address = 10.0.0.1/24\n").is_err());
        assert!(parse_wg_config("wg0", "[Interface]\nBogus = 1\n").is_err());
        assert!(parse_wg_config("wg0", "[Interface]\nAddress = 10.0.0.1/24\nListenPort = 1\n[Peer]\nAllowedIPs = 10.0.0.2/32\n").is_err());
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(
            port in 1u16..,
            prefix in 8u8..=32,
            peers in prop::collection::vec((any::<[u8; 4]>(), 0u8..=32, any::<bool>(), any::<u16>()), 0..4),
        ) {
            let mut cfg = WgInterfaceConfig::new(
                Cidr::new("10.8.0.1".parse().unwrap(), prefix).unwrap(), port, KEY_A);
            for (i, (octets, p, with_endpoint, ep_port)) in peers.into_iter().enumerate() {
                cfg.peers.push(WgPeerEntry {
                    public_key: format!("{KEY_B}{i}"),
                    allowed_ips: vec![Cidr::new(octets.into(), p).unwrap(), Cidr::host(octets.into())],
                    endpoint: with_endpoint.then(|| format!("203.0.113.{}:{ep_port}", i + 1)),
                });
            }
            let text = render_wg_config(&cfg).unwrap();
            prop_assert_eq!(parse_wg_config("wg0", &text).unwrap(), cfg);
        }
    }
}
