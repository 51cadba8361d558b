//! Calibrated WAN/LAN latency and bandwidth model, plus ping/iperf style probes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::topology::{DatacenterId, NodeRole, NodeSpec};

/// Bytes per KByte as reported by iperf3.
pub const KBYTE: f64 = 1024.0;
/// Default intra-datacenter bandwidth, roughly 1 Gbps.
pub const DEFAULT_INTRA_KBPS: f64 = 125_000.0;
/// Segment size used by the iperf emulator.
pub const IPERF_SEGMENT_BYTES: u64 = 1448;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("interval `{name}` is invalid: [{min}, {max}] (need 0 < min <= max)")]
    BadInterval { name: &'static str, min: f64, max: f64 },
    #[error("spike probability {0} is outside [0, 1]")]
    BadSpikeProbability(f64),
    #[error("spike multiplier {0} must be >= 1")]
    BadSpikeMultiplier(f64),
    #[error("bandwidth `{name}` must be positive, got {value}")]
    BadBandwidth { name: &'static str, value: f64 },
}

/// Closed interval in milliseconds, serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn midpoint(&self) -> f64 {
        (self.min + self.max) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    fn check(&self, name: &'static str) -> Result<(), ProfileError> {
        if self.min > 0.0 && self.min <= self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(ProfileError::BadInterval { name, min: self.min, max: self.max })
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkProfile {
    pub intra_private_ms: Interval,
    pub intra_public_ms: Interval,
    pub cross_ms: Interval,
    /// KByte/s, public to private.
    pub download_kbps: f64,
    /// KByte/s, private to public.
    pub upload_kbps: f64,
    pub intra_kbps: f64,
    pub spike_probability: f64,
    pub spike_multiplier: f64,
    pub seed: u64,
}

impl Default for NetworkProfile {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl NetworkProfile {
    /// Measured OpenStack/Azure figures: broker-to-shared latency inside each
    /// cloud, shared-to-shared latency across clouds, and iperf bandwidth.
    pub fn calibrated() -> Self {
        Self {
            intra_private_ms: Interval::new(0.5, 0.7),
            intra_public_ms: Interval::new(1.1, 1.4),
            cross_ms: Interval::new(228.5, 230.5),
            download_kbps: 11191.0,
            upload_kbps: 1009.0,
            intra_kbps: DEFAULT_INTRA_KBPS,
            spike_probability: 0.0,
            spike_multiplier: 8.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        self.intra_private_ms.check("intra_private_ms")?;
        self.intra_public_ms.check("intra_public_ms")?;
        self.cross_ms.check("cross_ms")?;
        for (name, value) in [
            ("download_kbps", self.download_kbps),
            ("upload_kbps", self.upload_kbps),
            ("intra_kbps", self.intra_kbps),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ProfileError::BadBandwidth { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(ProfileError::BadSpikeProbability(self.spike_probability));
        }
        if !(self.spike_multiplier >= 1.0 && self.spike_multiplier.is_finite()) {
            return Err(ProfileError::BadSpikeMultiplier(self.spike_multiplier));
        }
        Ok(())
    }

    pub fn interval(&self, a: DatacenterId, b: DatacenterId) -> Interval {
        match (a, b) {
            (DatacenterId::Private, DatacenterId::Private) => self.intra_private_ms,
            (DatacenterId::Public, DatacenterId::Public) => self.intra_public_ms,
            _ => self.cross_ms,
        }
    }

    pub fn bandwidth_kbps(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Up => self.upload_kbps,
            Direction::Down => self.download_kbps,
            Direction::Intra => self.intra_kbps,
        }
    }

    /// Largest latency a single sample can take.
    pub fn max_sample_ms(&self) -> f64 {
        let worst = self
            .cross_ms
            .max
            .max(self.intra_private_ms.max)
            .max(self.intra_public_ms.max);
        if self.spike_probability > 0.0 {
            worst * self.spike_multiplier
        } else {
            worst
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Private to public.
    Up,
    /// Public to private.
    Down,
    Intra,
}

impl Direction {
    pub fn between(src: DatacenterId, dst: DatacenterId) -> Self {
        match (src, dst) {
            (DatacenterId::Private, DatacenterId::Public) => Direction::Up,
            (DatacenterId::Public, DatacenterId::Private) => Direction::Down,
            _ => Direction::Intra,
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "up" | "upload" => Ok(Direction::Up),
            "down" | "download" => Ok(Direction::Down),
            "intra" => Ok(Direction::Intra),
            other => Err(format!("unknown direction `{other}` (expected up, down or intra)")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Intra => "intra",
        })
    }
}

/// One latency draw between two nodes. Self-messages cost nothing.
///
/// Two uniforms are consumed per non-self call whatever the spike setting,
/// so streams stay aligned when only `spike_probability` changes.
pub fn sample_latency<R: Rng + ?Sized>(
    src: &NodeSpec,
    dst: &NodeSpec,
    profile: &NetworkProfile,
    rng: &mut R,
) -> f64 {
    if src == dst {
        return 0.0;
    }
    let interval = profile.interval(src.datacenter, dst.datacenter);
    let u: f64 = rng.random();
    let spike: f64 = rng.random();
    let base = interval.min + interval.width() * u;
    if spike < profile.spike_probability {
        base * profile.spike_multiplier
    } else {
        base
    }
}

pub fn transfer_time(bytes: u64, direction: Direction, profile: &NetworkProfile) -> f64 {
    if bytes == 0 {
        return 0.0;
    }
    bytes as f64 / (profile.bandwidth_kbps(direction) * KBYTE) * 1000.0
}

/// Source of link costs for the replication models.
///
/// `expected_ms` drives replica selection ("nearest"); `rtt_ms` is what an
/// operation is actually charged.
pub trait LinkModel {
    fn rtt_ms(&mut self, src: &NodeSpec, dst: &NodeSpec) -> f64;
    fn expected_ms(&self, src: &NodeSpec, dst: &NodeSpec) -> f64;
    fn transfer_ms(&self, bytes: u64, src: DatacenterId, dst: DatacenterId) -> f64;
}

/// Random link costs drawn from a profile.
pub struct Sampler<'a, R: Rng + ?Sized> {
    pub profile: &'a NetworkProfile,
    pub rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> Sampler<'a, R> {
    pub fn new(profile: &'a NetworkProfile, rng: &'a mut R) -> Self {
        Self { profile, rng }
    }
}

impl<R: Rng + ?Sized> LinkModel for Sampler<'_, R> {
    fn rtt_ms(&mut self, src: &NodeSpec, dst: &NodeSpec) -> f64 {
        sample_latency(src, dst, self.profile, self.rng)
    }

    fn expected_ms(&self, src: &NodeSpec, dst: &NodeSpec) -> f64 {
        midpoint_latency(src, dst, self.profile)
    }

    fn transfer_ms(&self, bytes: u64, src: DatacenterId, dst: DatacenterId) -> f64 {
        transfer_time(bytes, Direction::between(src, dst), self.profile)
    }
}

/// Noise-free link costs: every hop costs its interval midpoint.
pub struct Midpoint<'a> {
    pub profile: &'a NetworkProfile,
}

impl LinkModel for Midpoint<'_> {
    fn rtt_ms(&mut self, src: &NodeSpec, dst: &NodeSpec) -> f64 {
        midpoint_latency(src, dst, self.profile)
    }

    fn expected_ms(&self, src: &NodeSpec, dst: &NodeSpec) -> f64 {
        midpoint_latency(src, dst, self.profile)
    }

    fn transfer_ms(&self, bytes: u64, src: DatacenterId, dst: DatacenterId) -> f64 {
        transfer_time(bytes, Direction::between(src, dst), self.profile)
    }
}

/// Link costs read from a fixed node-id matrix; transfers use `profile`.
#[derive(Debug, Clone)]
pub struct FixedLatencies {
    pub matrix: Vec<Vec<f64>>,
    pub profile: NetworkProfile,
}

impl FixedLatencies {
    pub fn new(matrix: Vec<Vec<f64>>) -> Self {
        Self { matrix, profile: NetworkProfile::calibrated() }
    }
}

impl LinkModel for FixedLatencies {
    fn rtt_ms(&mut self, src: &NodeSpec, dst: &NodeSpec) -> f64 {
        self.expected_ms(src, dst)
    }

    fn expected_ms(&self, src: &NodeSpec, dst: &NodeSpec) -> f64 {
        if src.node_id == dst.node_id {
            0.0
        } else {
            self.matrix[src.node_id][dst.node_id]
        }
    }

    fn transfer_ms(&self, bytes: u64, src: DatacenterId, dst: DatacenterId) -> f64 {
        transfer_time(bytes, Direction::between(src, dst), &self.profile)
    }
}

pub fn midpoint_latency(src: &NodeSpec, dst: &NodeSpec, profile: &NetworkProfile) -> f64 {
    if src == dst {
        0.0
    } else {
        profile.interval(src.datacenter, dst.datacenter).midpoint()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub packets_sent: u64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub stddev_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IperfReport {
    pub direction: Direction,
    pub duration_s: f64,
    pub bytes_transferred: u64,
    pub kbytes_per_sec: f64,
}

/// Aggregate `packets` independent latency draws (population stddev).
pub fn ping_probe(
    src: &NodeSpec,
    dst: &NodeSpec,
    packets: u64,
    profile: &NetworkProfile,
    seed: u64,
) -> ProbeStats {
    assert!(packets >= 1, "ping probe needs at least one packet");
    let mut rng = seed::rng(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for _ in 0..packets {
        let x = sample_latency(src, dst, profile, &mut rng);
        sum += x;
        sum_sq += x * x;
        min = min.min(x);
        max = max.max(x);
    }
    let n = packets as f64;
    let mean = (sum / n).clamp(min, max);
    let var = (sum_sq / n - mean * mean).max(0.0);
    ProbeStats { packets_sent: packets, mean_ms: mean, min_ms: min, max_ms: max, stddev_ms: var.sqrt() }
}

/// Back-to-back fixed-size segments for `duration_s`; reports achieved KByte/s.
pub fn iperf_probe(direction: Direction, duration_s: f64, profile: &NetworkProfile) -> IperfReport {
    assert!(duration_s > 0.0, "iperf duration must be positive");
    let segment_ms = transfer_time(IPERF_SEGMENT_BYTES, direction, profile);
    let segments = (duration_s * 1000.0 / segment_ms).floor() as u64;
    let bytes = segments * IPERF_SEGMENT_BYTES;
    IperfReport {
        direction,
        duration_s,
        bytes_transferred: bytes,
        kbytes_per_sec: bytes as f64 / KBYTE / duration_s,
    }
}

/// Named probe endpoints: the broker and shared subnets of each cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Broker(DatacenterId),
    Shared(DatacenterId),
}

impl Endpoint {
    pub fn datacenter(self) -> DatacenterId {
        match self {
            Endpoint::Broker(dc) | Endpoint::Shared(dc) => dc,
        }
    }

    pub fn node(self) -> NodeSpec {
        let (id, role) = match self {
            Endpoint::Broker(DatacenterId::Private) => (0, NodeRole::BrokerVM),
            Endpoint::Broker(DatacenterId::Public) => (1, NodeRole::BrokerVM),
            Endpoint::Shared(DatacenterId::Private) => (2, NodeRole::DataNode),
            Endpoint::Shared(DatacenterId::Public) => (3, NodeRole::DataNode),
        };
        NodeSpec { node_id: id, datacenter: self.datacenter(), role }
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, dc) = s
            .split_once('-')
            .ok_or_else(|| format!("unknown endpoint `{s}`"))?;
        let dc = match dc {
            "private" | "local" => DatacenterId::Private,
            "public" | "remote" => DatacenterId::Public,
            _ => return Err(format!("unknown endpoint `{s}`")),
        };
        match kind {
            "broker" => Ok(Endpoint::Broker(dc)),
            "shared" => Ok(Endpoint::Shared(dc)),
            _ => Err(format!("unknown endpoint `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn private(id: usize) -> NodeSpec {
        NodeSpec::data(id, DatacenterId::Private)
    }

    fn public(id: usize) -> NodeSpec {
        NodeSpec::data(id, DatacenterId::Public)
    }

    #[test]
    fn intra_private_sample_in_range() {
        let p = NetworkProfile::calibrated();
        let mut rng = seed::rng(1);
        for _ in 0..1000 {
            let x = sample_latency(&private(0), &private(1), &p, &mut rng);
            assert!((0.5..=0.7).contains(&x), "{x}");
        }
    }

    #[test]
    fn self_latency_is_zero() {
        let p = NetworkProfile::calibrated();
        let mut rng = seed::rng(1);
        assert_eq!(sample_latency(&public(3), &public(3), &p, &mut rng), 0.0);
    }

    #[test]
    fn cross_sample_in_calibrated_band() {
        let p = NetworkProfile::calibrated();
        let mut rng = seed::rng(2);
        for _ in 0..1000 {
            let x = sample_latency(&private(0), &public(1), &p, &mut rng);
            assert!((220.0..=230.5).contains(&x), "{x}");
        }
    }

    #[test]
    fn spikes_multiply() {
        let mut p = NetworkProfile::calibrated();
        p.spike_probability = 1.0;
        let mut rng = seed::rng(3);
        let x = sample_latency(&private(0), &public(1), &p, &mut rng);
        assert!((228.5 * 8.0..=230.5 * 8.0).contains(&x));
    }

    #[test]
    fn transfer_examples() {
        let p = NetworkProfile::calibrated();
        assert!((transfer_time(1009 * 1024, Direction::Up, &p) - 1000.0).abs() < 1e-9);
        assert!((transfer_time(11191 * 1024, Direction::Down, &p) - 1000.0).abs() < 1e-9);
        assert_eq!(transfer_time(0, Direction::Up, &p), 0.0);
        assert_eq!(transfer_time(0, Direction::Intra, &p), 0.0);
    }

    #[test]
    fn ping_examples() {
        let p = NetworkProfile::calibrated();
        let cross = ping_probe(&Endpoint::Shared(DatacenterId::Private).node(), &Endpoint::Shared(DatacenterId::Public).node(), 1000, &p, 9);
        assert_eq!(cross.packets_sent, 1000);
        assert!((228.5..=230.5).contains(&cross.mean_ms));

        let one = ping_probe(&private(0), &public(1), 1, &p, 9);
        assert_eq!(one.mean_ms, one.min_ms);
        assert_eq!(one.mean_ms, one.max_ms);
        assert_eq!(one.stddev_ms, 0.0);

        let local = ping_probe(&private(0), &private(1), 1000, &p, 9);
        // uniform mean (a + b) / 2, tolerance one interval width
        assert!((local.mean_ms - 0.6).abs() <= 0.2);
        assert!(local.min_ms <= local.mean_ms && local.mean_ms <= local.max_ms);
    }

    #[test]
    fn ping_mean_converges_to_midpoint() {
        let p = NetworkProfile::calibrated();
        for (a, b, iv) in [
            (private(0), private(1), p.intra_private_ms),
            (public(0), public(1), p.intra_public_ms),
            (private(0), public(1), p.cross_ms),
        ] {
            let s = ping_probe(&a, &b, 100_000, &p, 11);
            assert!((s.mean_ms - iv.midpoint()).abs() < 0.01 * iv.width(), "{s:?}");
        }
    }

    #[test]
    fn iperf_examples() {
        let p = NetworkProfile::calibrated();
        let down = iperf_probe(Direction::Down, 600.0, &p);
        assert!((down.kbytes_per_sec / 11191.0 - 1.0).abs() < 0.05);
        let up = iperf_probe(Direction::Up, 600.0, &p);
        assert!((up.kbytes_per_sec / 1009.0 - 1.0).abs() < 0.05);

        let mut q = NetworkProfile::calibrated();
        q.download_kbps = 1000.0;
        let r = iperf_probe(Direction::Down, 1.0, &q);
        assert!((r.kbytes_per_sec / 1000.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn validation() {
        assert!(NetworkProfile::calibrated().validate().is_ok());
        let mut p = NetworkProfile::calibrated();
        p.cross_ms = Interval::new(5.0, 1.0);
        assert!(matches!(p.validate(), Err(ProfileError::BadInterval { .. })));
        let mut p = NetworkProfile::calibrated();
        p.spike_probability = 1.5;
        assert!(p.validate().is_err());
        let mut p = NetworkProfile::calibrated();
        p.spike_multiplier = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn endpoints_parse() {
        assert_eq!("shared-private".parse(), Ok(Endpoint::Shared(DatacenterId::Private)));
        assert_eq!("broker-public".parse(), Ok(Endpoint::Broker(DatacenterId::Public)));
        assert!("shared-mars".parse::<Endpoint>().is_err());
    }

    #[test]
    fn profile_json_shape() {
        let json = serde_json::to_value(NetworkProfile::calibrated()).unwrap();
        assert_eq!(json["cross_ms"], serde_json::json!([228.5, 230.5]));
        let partial: NetworkProfile = serde_json::from_str(r#"{"spike_probability": 0.05}"#).unwrap();
        assert_eq!(partial.spike_probability, 0.05);
        assert_eq!(partial.upload_kbps, 1009.0);
    }

    proptest! {
        #[test]
        fn unspiked_samples_stay_in_interval(seed in any::<u64>(), a in 0usize..2, b in 0usize..2) {
            let p = NetworkProfile::calibrated();
            let dc = |i| if i == 0 { DatacenterId::Private } else { DatacenterId::Public };
            let (s, d) = (NodeSpec::data(0, dc(a)), NodeSpec::data(1, dc(b)));
            let iv = p.interval(s.datacenter, d.datacenter);
            let mut rng = seed::rng(seed);
            for _ in 0..64 {
                let x = sample_latency(&s, &d, &p, &mut rng);
                prop_assert!(iv.contains(x) && x > 0.0);
            }
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>()) {
            let p = NetworkProfile::calibrated();
            let draw = |seed| {
                let mut rng = seed::rng(seed);
                (0..16).map(|i| sample_latency(&private(0), &public(1 + i), &p, &mut rng).to_bits()).collect::<Vec<_>>()
            };
            prop_assert_eq!(draw(seed), draw(seed));
        }

        #[test]
        fn transfer_is_linear(bytes in 0u64..1 << 40, dir in 0usize..3) {
            let p = NetworkProfile::calibrated();
            let d = [Direction::Up, Direction::Down, Direction::Intra][dir];
            let one = transfer_time(bytes, d, &p);
            let two = transfer_time(2 * bytes, d, &p);
            prop_assert!((two - 2.0 * one).abs() <= 1e-9 * two.max(1.0));
        }
    }
}
