//! YCSB-style workloads: record schema, key choosers, the A-F operation
//! mixes and the flush/load/run protocol driven by closed-loop clients.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbmodel::{OpKind, OpOutcome, OpRequest, OpStatus};
use crate::seed::{self, SimRng};

pub const FIELD_COUNT: u64 = 10;
pub const FIELD_LENGTH_BYTES: u64 = 8;
pub const RECORD_BYTES: u64 = FIELD_COUNT * FIELD_LENGTH_BYTES;
pub const ZIPF_EXPONENT: f64 = 0.99;
pub const DEFAULT_LOAD_COUNT: u64 = 10_000;
pub const DEFAULT_RUN_COUNT: u64 = 1_000;
pub const DEFAULT_SCAN_MAX: u32 = 100;
pub const DEFAULT_CLIENT_THREADS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchema {
    pub field_count: u64,
    pub field_length_bytes: u64,
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self { field_count: FIELD_COUNT, field_length_bytes: FIELD_LENGTH_BYTES }
    }
}

impl RecordSchema {
    pub fn record_bytes(&self) -> u64 {
        self.field_count * self.field_length_bytes
    }

    /// Pseudo-random field payloads. Only their size matters to the model.
    pub fn random_record<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<u8>> {
        (0..self.field_count)
            .map(|_| {
                let mut field = vec![0u8; self.field_length_bytes as usize];
                rng.fill(field.as_mut_slice());
                field
            })
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("unknown workload `{0}` (expected A-F)")]
    UnknownLabel(String),
    #[error("invalid workload {label}: {message}")]
    Invalid { label: WorkloadLabel, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkloadLabel {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl WorkloadLabel {
    pub const ALL: [WorkloadLabel; 6] =
        [WorkloadLabel::A, WorkloadLabel::B, WorkloadLabel::C, WorkloadLabel::D, WorkloadLabel::E, WorkloadLabel::F];

    /// Descriptive name. A and B carry swapped names relative to the usual
    /// YCSB convention; the names are cosmetic and the mixes are unaffected.
    pub fn display_name(self) -> &'static str {
        match self {
            WorkloadLabel::A => "Read-intensive",
            WorkloadLabel::B => "Write-intensive",
            WorkloadLabel::C => "Read-only",
            WorkloadLabel::D => "Read-latest",
            WorkloadLabel::E => "Scan",
            WorkloadLabel::F => "Read-Modify-Write",
        }
    }
}

impl fmt::Display for WorkloadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for WorkloadLabel {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().trim_start_matches("WORKLOAD") {
            "A" => Ok(WorkloadLabel::A),
            "B" => Ok(WorkloadLabel::B),
            "C" => Ok(WorkloadLabel::C),
            "D" => Ok(WorkloadLabel::D),
            "E" => Ok(WorkloadLabel::E),
            "F" => Ok(WorkloadLabel::F),
            _ => Err(WorkloadError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyDistribution {
    Zipfian,
    Latest,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub label: WorkloadLabel,
    pub mix: BTreeMap<OpKind, f64>,
    pub key_distribution: KeyDistribution,
    pub load_count: u64,
    pub run_count: u64,
    pub scan_max: u32,
}

pub fn make_workload(label: WorkloadLabel) -> WorkloadSpec {
    use OpKind::*;
    let (mix, key_distribution): (&[(OpKind, f64)], _) = match label {
        WorkloadLabel::A => (&[(Read, 0.5), (Update, 0.5)], KeyDistribution::Zipfian),
        WorkloadLabel::B => (&[(Read, 0.95), (Update, 0.05)], KeyDistribution::Zipfian),
        WorkloadLabel::C => (&[(Read, 1.0)], KeyDistribution::Zipfian),
        WorkloadLabel::D => (&[(Read, 0.95), (Insert, 0.05)], KeyDistribution::Latest),
        WorkloadLabel::E => (&[(Scan, 0.95), (Insert, 0.05)], KeyDistribution::Zipfian),
        WorkloadLabel::F => (&[(ReadModifyWrite, 0.5), (Read, 0.5)], KeyDistribution::Zipfian),
    };
    WorkloadSpec {
        label,
        mix: mix.iter().copied().collect(),
        key_distribution,
        load_count: DEFAULT_LOAD_COUNT,
        run_count: DEFAULT_RUN_COUNT,
        scan_max: DEFAULT_SCAN_MAX,
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |message: String| Err(WorkloadError::Invalid { label: self.label, message });
        let sum: f64 = self.mix.values().sum();
        if self.mix.values().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return fail(format!("operation proportions must be non-negative and sum to 1 (got {sum})"));
        }
        if self.load_count == 0 || self.run_count == 0 {
            return fail("load_count and run_count must be positive".into());
        }
        if self.scan_max == 0 {
            return fail("scan_max must be positive".into());
        }
        Ok(())
    }

    pub fn proportion(&self, kind: OpKind) -> f64 {
        self.mix.get(&kind).copied().unwrap_or(0.0)
    }
}

/// Workload entry in an experiment file: a label, or a label with overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadConfig {
    Label(WorkloadLabel),
    Custom {
        label: WorkloadLabel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mix: Option<BTreeMap<OpKind, f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key_distribution: Option<KeyDistribution>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        load_count: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        run_count: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scan_max: Option<u32>,
    },
}

impl WorkloadConfig {
    pub fn label(&self) -> WorkloadLabel {
        match self {
            WorkloadConfig::Label(l) | WorkloadConfig::Custom { label: l, .. } => *l,
        }
    }

    pub fn resolve(&self) -> Result<WorkloadSpec, WorkloadError> {
        let mut spec = make_workload(self.label());
        if let WorkloadConfig::Custom { mix, key_distribution, load_count, run_count, scan_max, .. } = self {
            if let Some(m) = mix {
                spec.mix = m.clone();
            }
            if let Some(d) = key_distribution {
                spec.key_distribution = *d;
            }
            spec.load_count = load_count.unwrap_or(spec.load_count);
            spec.run_count = run_count.unwrap_or(spec.run_count);
            spec.scan_max = scan_max.unwrap_or(spec.scan_max);
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Pick an already-inserted key among `record_count` records.
pub fn next_key<R: Rng + ?Sized>(spec: &WorkloadSpec, record_count: u64, rng: &mut R) -> u64 {
    assert!(record_count >= 1, "no records inserted yet");
    match spec.key_distribution {
        KeyDistribution::Uniform => rng.random_range(0..record_count),
        KeyDistribution::Zipfian => zipf_rank(record_count, rng),
        KeyDistribution::Latest => record_count - 1 - zipf_rank(record_count, rng),
    }
}

/// Zero-based rank with probability proportional to `1 / (rank + 1)^0.99`.
fn zipf_rank<R: Rng + ?Sized>(items: u64, rng: &mut R) -> u64 {
    let zipf = Zipf::new(items as f64, ZIPF_EXPONENT).expect("items >= 1");
    let rank = zipf.sample(rng) as u64;
    rank.clamp(1, items) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Flush,
    Load,
    Run,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Flush => "flush",
            Phase::Load => "load",
            Phase::Run => "run",
        }
    }
}

/// The operations of the run phase, fixed up front in issue order.
pub fn plan_run(spec: &WorkloadSpec, seed: u64) -> Vec<OpRequest> {
    let mut rng = seed::rng(seed::derive_label(seed, "plan"));
    let kinds: Vec<OpKind> = spec.mix.keys().copied().collect();
    let chooser = WeightedIndex::new(spec.mix.values().copied()).expect("validated mix");
    let mut records = spec.load_count;
    (0..spec.run_count)
        .map(|_| {
            let kind = kinds[chooser.sample(&mut rng)];
            let key = if kind == OpKind::Insert {
                records += 1;
                records - 1
            } else {
                next_key(spec, records, &mut rng)
            };
            let scan_len = if kind == OpKind::Scan { rng.random_range(1..=spec.scan_max) } else { 0 };
            OpRequest { kind, key, scan_len }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientSettings {
    pub threads: usize,
    /// A timed-out operation occupies its client for this long.
    pub timeout_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedOutcome {
    pub index: u64,
    pub client: usize,
    pub issued_at_ms: f64,
    pub outcome: OpOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: Phase,
    pub outcomes: Vec<TimedOutcome>,
    /// Virtual time from phase start until the last client finished.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunEvent {
    PhaseStart(Phase),
    Outcome(TimedOutcome),
    PhaseEnd { phase: Phase, elapsed_ms: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRun {
    pub load: PhaseResult,
    pub run: PhaseResult,
}

impl WorkloadRun {
    /// Phase markers interleaved with outcomes in issue order.
    pub fn events(&self) -> Vec<RunEvent> {
        let mut events = vec![
            RunEvent::PhaseStart(Phase::Flush),
            RunEvent::PhaseEnd { phase: Phase::Flush, elapsed_ms: 0.0 },
        ];
        for p in [&self.load, &self.run] {
            events.push(RunEvent::PhaseStart(p.phase));
            events.extend(p.outcomes.iter().copied().map(RunEvent::Outcome));
            events.push(RunEvent::PhaseEnd { phase: p.phase, elapsed_ms: p.elapsed_ms });
        }
        events
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    free_at: f64,
    client: usize,
}

impl Eq for Slot {}

impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        self.free_at.total_cmp(&other.free_at).then(self.client.cmp(&other.client))
    }
}

impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Closed-loop clients on one virtual clock: the earliest idle client takes
/// the next operation. Each op gets its own random stream keyed by index.
fn closed_loop<F>(phase: Phase, ops: &[OpRequest], clients: ClientSettings, seed: u64, exec: &mut F) -> PhaseResult
where
    F: FnMut(Phase, &OpRequest, &mut SimRng) -> OpOutcome,
{
    let phase_seed = seed::derive_label(seed, phase.as_str());
    let mut idle: BinaryHeap<Reverse<Slot>> =
        (0..clients.threads.max(1)).map(|client| Reverse(Slot { free_at: 0.0, client })).collect();
    let mut outcomes = Vec::with_capacity(ops.len());
    let mut elapsed: f64 = 0.0;
    for (index, op) in ops.iter().enumerate() {
        let Reverse(slot) = idle.pop().expect("at least one client");
        let mut rng = seed::rng(seed::derive(phase_seed, index as u64));
        let outcome = exec(phase, op, &mut rng);
        let busy = match outcome.status {
            OpStatus::Ok => outcome.latency_ms,
            OpStatus::TimedOut => clients.timeout_ms.min(outcome.latency_ms),
        };
        let done = slot.free_at + busy;
        elapsed = elapsed.max(done);
        outcomes.push(TimedOutcome { index: index as u64, client: slot.client, issued_at_ms: slot.free_at, outcome });
        idle.push(Reverse(Slot { free_at: done, client: slot.client }));
    }
    PhaseResult { phase, outcomes, elapsed_ms: elapsed }
}

/// Flush, then load `load_count` inserts, then run the planned mix.
pub fn run_phases<F>(spec: &WorkloadSpec, clients: ClientSettings, seed: u64, mut exec: F) -> WorkloadRun
where
    F: FnMut(Phase, &OpRequest, &mut SimRng) -> OpOutcome,
{
    // flush: the keyspace restarts empty, so load keys are 0..load_count
    let load_ops: Vec<OpRequest> =
        (0..spec.load_count).map(|key| OpRequest { kind: OpKind::Insert, key, scan_len: 0 }).collect();
    let load = closed_loop(Phase::Load, &load_ops, clients, seed, &mut exec);
    let run_ops = plan_run(spec, seed);
    let run = closed_loop(Phase::Run, &run_ops, clients, seed, &mut exec);
    WorkloadRun { load, run }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixed(latency: f64) -> impl FnMut(Phase, &OpRequest, &mut SimRng) -> OpOutcome {
        move |_, op, _| OpOutcome { kind: op.kind, latency_ms: latency, status: OpStatus::Ok, bytes_moved: RECORD_BYTES }
    }

    const CLIENTS: ClientSettings = ClientSettings { threads: 8, timeout_ms: 1500.0 };

    #[test]
    fn schema_is_80_bytes() {
        let s = RecordSchema::default();
        assert_eq!(s.record_bytes(), 80);
        assert_eq!(RECORD_BYTES, 80);
        let rec = s.random_record(&mut seed::rng(1));
        assert_eq!(rec.iter().map(Vec::len).sum::<usize>(), 80);
    }

    #[test]
    fn reference_mixes() {
        let c = make_workload(WorkloadLabel::C);
        assert_eq!(c.mix, BTreeMap::from([(OpKind::Read, 1.0)]));
        assert_eq!(c.key_distribution, KeyDistribution::Zipfian);
        let e = make_workload(WorkloadLabel::E);
        assert_eq!(e.mix, BTreeMap::from([(OpKind::Scan, 0.95), (OpKind::Insert, 0.05)]));
        assert_eq!(make_workload(WorkloadLabel::D).key_distribution, KeyDistribution::Latest);
        for label in WorkloadLabel::ALL {
            let w = make_workload(label);
            assert!((w.mix.values().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!((w.load_count, w.run_count), (10_000, 1_000));
            w.validate().unwrap();
        }
    }

    #[test]
    fn labels_parse() {
        assert_eq!("c".parse::<WorkloadLabel>(), Ok(WorkloadLabel::C));
        assert_eq!("workloadf".parse::<WorkloadLabel>(), Ok(WorkloadLabel::F));
        assert!(matches!("G".parse::<WorkloadLabel>(), Err(WorkloadError::UnknownLabel(_))));
    }

    #[test]
    fn config_overrides() {
        let w: WorkloadConfig = serde_json::from_str(r#"{"label": "A", "run_count": 50}"#).unwrap();
        let spec = w.resolve().unwrap();
        assert_eq!((spec.run_count, spec.load_count), (50, 10_000));
        let bad: WorkloadConfig = serde_json::from_str(r#"{"label": "A", "mix": {"Read": 0.7}}"#).unwrap();
        assert!(bad.resolve().is_err());
        let plain: WorkloadConfig = serde_json::from_str(r#""E""#).unwrap();
        assert_eq!(plain.resolve().unwrap(), make_workload(WorkloadLabel::E));
    }

    #[test]
    fn uniform_over_one_record() {
        let mut spec = make_workload(WorkloadLabel::A);
        spec.key_distribution = KeyDistribution::Uniform;
        let mut rng = seed::rng(1);
        assert!((0..100).all(|_| next_key(&spec, 1, &mut rng) == 0));
        spec.key_distribution = KeyDistribution::Zipfian;
        assert!((0..100).all(|_| next_key(&spec, 1, &mut rng) == 0));
        spec.key_distribution = KeyDistribution::Latest;
        assert!((0..100).all(|_| next_key(&spec, 1, &mut rng) == 0));
    }

    fn counts(dist: KeyDistribution, keys: u64, draws: usize) -> Vec<u64> {
        let mut spec = make_workload(WorkloadLabel::A);
        spec.key_distribution = dist;
        let mut rng = seed::rng(99);
        let mut c = vec![0u64; keys as usize];
        for _ in 0..draws {
            c[next_key(&spec, keys, &mut rng) as usize] += 1;
        }
        c
    }

    #[test]
    fn zipfian_frequencies_fall_with_rank() {
        let (keys, draws) = (10_000u64, 100_000usize);
        let c = counts(KeyDistribution::Zipfian, keys, draws);
        // log-spaced rank buckets: mean count per key must not increase
        let mut bounds = vec![0usize];
        while *bounds.last().unwrap() < keys as usize {
            let next = (bounds.last().unwrap() * 2).max(1).min(keys as usize);
            bounds.push(next);
        }
        let means: Vec<f64> = bounds
            .windows(2)
            .map(|w| c[w[0]..w[1]].iter().sum::<u64>() as f64 / (w[1] - w[0]) as f64)
            .collect();
        assert!(means.windows(2).all(|m| m[1] <= m[0]), "{means:?}");

        // rank-0 share against the exact normalizer
        let zeta: f64 = (1..=keys).map(|k| (k as f64).powf(-ZIPF_EXPONENT)).sum();
        let p0 = 1.0 / zeta;
        let sigma = (draws as f64 * p0 * (1.0 - p0)).sqrt();
        assert!((c[0] as f64 - draws as f64 * p0).abs() < 4.0 * sigma, "{} vs {}", c[0], draws as f64 * p0);
    }

    #[test]
    fn latest_favours_recent_keys() {
        let c = counts(KeyDistribution::Latest, 10_000, 100_000);
        let bottom: u64 = c[..1000].iter().sum();
        let top: u64 = c[9000..].iter().sum();
        assert!(top > bottom, "top {top} bottom {bottom}");
        assert!(c[9999] > c[0]);
    }

    #[test]
    fn phase_sizes() {
        let spec = make_workload(WorkloadLabel::A);
        let run = run_phases(&spec, CLIENTS, 1, fixed(1.0));
        assert_eq!(run.load.outcomes.len(), 10_000);
        assert!(run.load.outcomes.iter().all(|o| o.outcome.kind == OpKind::Insert));
        assert_eq!(run.run.outcomes.len(), 1_000);
        let events = run.events();
        assert_eq!(events.first(), Some(&RunEvent::PhaseStart(Phase::Flush)));
        assert_eq!(events.len(), 2 + 2 + 10_000 + 2 + 1_000);
    }

    #[test]
    fn read_only_has_no_writes() {
        let run = run_phases(&make_workload(WorkloadLabel::C), CLIENTS, 5, fixed(1.0));
        assert!(run.run.outcomes.iter().all(|o| !o.outcome.kind.is_write()));
    }

    #[test]
    fn closed_loop_clock() {
        let mut spec = make_workload(WorkloadLabel::C);
        spec.load_count = 16;
        spec.run_count = 80;
        let run = run_phases(&spec, CLIENTS, 5, fixed(2.0));
        // 80 ops over 8 clients at 2 ms each
        assert_eq!(run.run.elapsed_ms, 20.0);
        assert_eq!(run.load.elapsed_ms, 4.0);
        let per_client = run.run.outcomes.iter().filter(|o| o.client == 3).count();
        assert_eq!(per_client, 10);
    }

    #[test]
    fn timed_out_ops_hold_client_for_timeout() {
        let mut spec = make_workload(WorkloadLabel::C);
        spec.load_count = 1;
        spec.run_count = 4;
        let clients = ClientSettings { threads: 1, timeout_ms: 10.0 };
        let run = run_phases(&spec, clients, 1, |_, op, _| OpOutcome {
            kind: op.kind,
            latency_ms: 50.0,
            status: OpStatus::TimedOut,
            bytes_moved: 0,
        });
        assert_eq!(run.run.elapsed_ms, 40.0);
    }

    #[test]
    fn plan_matches_mix_and_targets_existing_keys() {
        for label in WorkloadLabel::ALL {
            let spec = make_workload(label);
            let plan = plan_run(&spec, 17);
            let mut inserted = spec.load_count;
            for op in &plan {
                if op.kind == OpKind::Insert {
                    assert_eq!(op.key, inserted);
                    inserted += 1;
                } else {
                    assert!(op.key < inserted, "{label}: {op:?} before insert");
                }
                if op.kind == OpKind::Scan {
                    assert!((1..=spec.scan_max).contains(&op.scan_len));
                }
            }
            let n = plan.len() as f64;
            for kind in OpKind::ALL {
                let p = spec.proportion(kind);
                let got = plan.iter().filter(|o| o.kind == kind).count() as f64;
                let sigma = (n * p * (1.0 - p)).sqrt();
                assert!((got - n * p).abs() <= 3.0 * sigma, "{label} {kind:?}: {got} vs {}", n * p);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn runs_are_deterministic(seed in any::<u64>(), threads in 1usize..12, label in 0usize..6) {
            let mut spec = make_workload(WorkloadLabel::ALL[label]);
            spec.load_count = 200;
            spec.run_count = 100;
            let clients = ClientSettings { threads, timeout_ms: 1500.0 };
            let exec = |_: Phase, op: &OpRequest, rng: &mut SimRng| OpOutcome {
                kind: op.kind,
                latency_ms: 1.0 + rand::Rng::random::<f64>(rng),
                status: OpStatus::Ok,
                bytes_moved: RECORD_BYTES,
            };
            let a = run_phases(&spec, clients, seed, exec);
            let b = run_phases(&spec, clients, seed, exec);
            prop_assert_eq!(a, b);
        }
    }
}
