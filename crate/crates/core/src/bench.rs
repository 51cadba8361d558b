//! Experiment matrix sweeps over strategies × workloads × cluster configs,
//! metrics aggregation and report emission.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbmodel::{execute_op, place_replicas, ModelError, OpStatus, ReplicationStrategy, StrategyConfig, StrategyKind};
use crate::netsim::{NetworkProfile, ProfileError, Sampler};
use crate::seed;
use crate::topology::{enumerate_configs, Cluster, ClusterConfig, Topology, TopologyError};
use crate::workload::{
    run_phases, ClientSettings, TimedOutcome, WorkloadConfig, WorkloadError, WorkloadLabel, WorkloadSpec,
    DEFAULT_CLIENT_THREADS,
};

pub const DEFAULT_TIMEOUT_MS: f64 = 1500.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("cell {cell}: {source}")]
    Cell { cell: CellId, source: ModelError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

/// Experiment file contents. Everything but the seed has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub profile: NetworkProfile,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<StrategyConfig>,
    #[serde(default = "all_workloads")]
    pub workloads: Vec<WorkloadConfig>,
    /// Defaults to every (n, m) split of the topology's node count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configs: Option<Vec<ClusterConfig>>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: f64,
    #[serde(default = "default_threads")]
    pub client_threads: usize,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    /// Applied to every workload after its own overrides.
    #[serde(default)]
    pub workload_overrides: WorkloadOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_max: Option<u32>,
}

fn all_strategies() -> Vec<StrategyConfig> {
    StrategyKind::ALL.into_iter().map(StrategyConfig::from).collect()
}

fn all_workloads() -> Vec<WorkloadConfig> {
    WorkloadLabel::ALL.into_iter().map(WorkloadConfig::Label).collect()
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_MS
}

fn default_threads() -> usize {
    DEFAULT_CLIENT_THREADS
}

fn default_repeats() -> u32 {
    1
}

impl ExperimentConfig {
    /// The full reference matrix with the given seed.
    pub fn reference(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    pub fn into_matrix(self) -> Result<ExperimentMatrix, BenchError> {
        self.topology.validate()?;
        self.profile.validate()?;
        let total = self.topology.total;
        let configs = match self.configs {
            Some(c) => c,
            None => enumerate_configs(total)?,
        };
        if let Some(c) = configs.iter().find(|c| c.total() != total) {
            return Err(BenchError::Invalid(format!("config {c} does not use all {total} nodes")));
        }
        let strategies = self
            .strategies
            .iter()
            .map(|s| Ok(StrategyCell { label: s.label(), strategy: s.resolve(total)? }))
            .collect::<Result<Vec<_>, BenchError>>()?;
        let workloads = self
            .workloads
            .iter()
            .map(|w| {
                let mut spec = w.resolve()?;
                let o = &self.workload_overrides;
                spec.load_count = o.load_count.unwrap_or(spec.load_count);
                spec.run_count = o.run_count.unwrap_or(spec.run_count);
                spec.scan_max = o.scan_max.unwrap_or(spec.scan_max);
                spec.validate()?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>, BenchError>>()?;
        let matrix = ExperimentMatrix {
            strategies,
            workloads,
            configs,
            profile: self.profile,
            seed: self.seed,
            timeout_ms: self.timeout_ms,
            client_threads: self.client_threads,
            repeats: self.repeats,
        };
        matrix.validate()?;
        Ok(matrix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCell {
    pub label: String,
    pub strategy: ReplicationStrategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    pub strategies: Vec<StrategyCell>,
    pub workloads: Vec<WorkloadSpec>,
    pub configs: Vec<ClusterConfig>,
    pub profile: NetworkProfile,
    pub seed: u64,
    pub timeout_ms: f64,
    pub client_threads: usize,
    pub repeats: u32,
}

impl ExperimentMatrix {
    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |m: &str| Err(BenchError::Invalid(m.to_string()));
        if self.strategies.is_empty() || self.workloads.is_empty() || self.configs.is_empty() {
            return invalid("strategies, workloads and configs must all be non-empty");
        }
        if !(self.timeout_ms > 0.0) {
            return invalid("timeout_ms must be positive");
        }
        if self.client_threads == 0 {
            return invalid("client_threads must be at least 1");
        }
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        let mut labels: Vec<&str> = self.strategies.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return invalid("strategy labels must be unique");
        }
        let mut wl: Vec<WorkloadLabel> = self.workloads.iter().map(|w| w.label).collect();
        wl.sort_unstable();
        if wl.windows(2).any(|w| w[0] == w[1]) {
            return invalid("workload labels must be unique");
        }
        let mut cf = self.configs.clone();
        cf.sort_unstable();
        if cf.windows(2).any(|w| w[0] == w[1]) {
            return invalid("cluster configs must be unique");
        }
        Ok(())
    }

    /// Cells in strategy-major, then workload, then config order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.strategies.len() * self.workloads.len() * self.configs.len());
        for s in 0..self.strategies.len() {
            for w in 0..self.workloads.len() {
                for c in 0..self.configs.len() {
                    cells.push(Cell { strategy: s, workload: w, config: c });
                }
            }
        }
        cells
    }

    pub fn cell_id(&self, cell: Cell) -> CellId {
        CellId {
            strategy: self.strategies[cell.strategy].label.clone(),
            workload: self.workloads[cell.workload].label,
            config: self.configs[cell.config],
        }
    }
}

/// Indexes into the matrix axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub strategy: usize,
    pub workload: usize,
    pub config: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub strategy: String,
    pub workload: WorkloadLabel,
    pub config: ClusterConfig,
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.strategy, self.workload, self.config.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: Option<f64>,
    pub p95: Option<f64>,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self { mean: None, p95: None };
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        samples.sort_unstable_by(f64::total_cmp);
        // nearest-rank percentile
        let rank = ((0.95 * samples.len() as f64).ceil() as usize).max(1);
        Self { mean: Some(mean), p95: Some(samples[rank - 1]) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub strategy: String,
    pub workload: WorkloadLabel,
    pub config: ClusterConfig,
    pub throughput_ops_per_sec: f64,
    pub read_latency_ms: LatencyStats,
    pub write_latency_ms: LatencyStats,
    pub error_pct: f64,
    pub ops_total: u64,
}

impl MetricsRecord {
    pub fn cell_id(&self) -> CellId {
        CellId { strategy: self.strategy.clone(), workload: self.workload, config: self.config }
    }

    /// Aggregate run-phase outcomes; `elapsed_ms` is the summed virtual run time.
    pub fn from_outcomes(id: CellId, outcomes: &[TimedOutcome], elapsed_ms: f64) -> Self {
        let ops_total = outcomes.len() as u64;
        let ok = |write: bool| {
            outcomes
                .iter()
                .map(|o| o.outcome)
                .filter(|o| o.status == OpStatus::Ok && o.kind.is_write() == write)
                .map(|o| o.latency_ms)
                .collect::<Vec<_>>()
        };
        let timed_out = outcomes.iter().filter(|o| o.outcome.status == OpStatus::TimedOut).count();
        MetricsRecord {
            strategy: id.strategy,
            workload: id.workload,
            config: id.config,
            throughput_ops_per_sec: if elapsed_ms > 0.0 { ops_total as f64 * 1000.0 / elapsed_ms } else { 0.0 },
            read_latency_ms: LatencyStats::from_samples(ok(false)),
            write_latency_ms: LatencyStats::from_samples(ok(true)),
            error_pct: if ops_total == 0 { 0.0 } else { 100.0 * timed_out as f64 / ops_total as f64 },
            ops_total,
        }
    }
}

/// One cell on a fresh cluster: place replicas, then flush/load/run on the
/// virtual clock. With `repeats > 1` the run phases are pooled.
///
/// The key-hash salt comes from the experiment seed, not the cell: a real
/// database hashes keys with a fixed function, so a key lands in the same
/// slot whatever the cluster split and only slot ownership changes with m.
pub fn run_cell(cell: Cell, matrix: &ExperimentMatrix) -> Result<MetricsRecord, BenchError> {
    let id = matrix.cell_id(cell);
    let cell_seed = seed::derive_label(matrix.seed, &id.to_string());
    let strategy = &matrix.strategies[cell.strategy].strategy;
    let spec = &matrix.workloads[cell.workload];
    let config = matrix.configs[cell.config];
    let map = place_replicas(strategy, config, matrix.seed).map_err(|source| BenchError::Cell { cell: id.clone(), source })?;
    let cluster = Cluster::new(config);
    let client = cluster.manager();
    let clients = ClientSettings { threads: matrix.client_threads, timeout_ms: matrix.timeout_ms };

    let mut outcomes = Vec::new();
    let mut elapsed_ms = 0.0;
    for repeat in 0..matrix.repeats {
        let run = run_phases(spec, clients, seed::derive(cell_seed, u64::from(repeat)), |_, op, rng| {
            let mut net = Sampler::new(&matrix.profile, rng);
            execute_op(op, strategy, &map, &cluster, &client, &mut net, matrix.timeout_ms)
        });
        elapsed_ms += run.run.elapsed_ms;
        outcomes.extend(run.run.outcomes);
    }
    Ok(MetricsRecord::from_outcomes(id, &outcomes, elapsed_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

#[derive(Debug, Default)]
pub struct SweepResult {
    /// Successful cells in matrix order.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<BenchError>,
}

pub fn sweep(matrix: &ExperimentMatrix) -> SweepResult {
    sweep_with(matrix, Execution::default())
}

pub fn sweep_with(matrix: &ExperimentMatrix, execution: Execution) -> SweepResult {
    let cells = matrix.cells();
    let results: Vec<Result<MetricsRecord, BenchError>> = match execution {
        Execution::Sequential => cells.iter().map(|&c| run_cell(c, matrix)).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            cells.par_iter().map(|&c| run_cell(c, matrix)).collect()
        }
    };
    let mut out = SweepResult::default();
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.failures.push(e),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    PlotData,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plotdata" | "plot" => Ok(ReportFormat::PlotData),
            _ => Err(format!("unknown report format `{s}` (csv, json, plotdata)")),
        }
    }
}

pub const CSV_HEADER: [&str; 10] =
    ["strategy", "workload", "config", "throughput", "read_mean", "read_p95", "write_mean", "write_p95", "error_pct", "ops_total"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: std::io::Write>(records: &[MetricsRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.strategy.clone(),
            r.workload.to_string(),
            r.config.label(),
            r.throughput_ops_per_sec.to_string(),
            opt(r.read_latency_ms.mean),
            opt(r.read_latency_ms.p95),
            opt(r.write_latency_ms.mean),
            opt(r.write_latency_ms.p95),
            r.error_pct.to_string(),
            r.ops_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn plot_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NaN".into())
}

/// Write reports under `out_dir`; returns the files created.
pub fn emit_report(records: &[MetricsRecord], format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Invalid("no records to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    match format {
        ReportFormat::Csv => {
            let path = out_dir.join("results.csv");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            write_csv(records, file).map_err(|source| BenchError::Csv { path: path.clone(), source })?;
            Ok(vec![path])
        }
        ReportFormat::Json => {
            let path = out_dir.join("results.json");
            let text = serde_json::to_string_pretty(records).expect("records serialize");
            fs::write(&path, text + "\n").map_err(io_err(&path))?;
            Ok(vec![path])
        }
        ReportFormat::PlotData => {
            let dir = out_dir.join("plots");
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let mut groups: Vec<(&str, WorkloadLabel, Vec<&MetricsRecord>)> = Vec::new();
            for r in records {
                match groups.iter_mut().find(|g| g.0 == r.strategy && g.1 == r.workload) {
                    Some(g) => g.2.push(r),
                    None => groups.push((&r.strategy, r.workload, vec![r])),
                }
            }
            let mut files = Vec::with_capacity(groups.len());
            for (strategy, workload, rows) in groups {
                let path = dir.join(format!("{strategy}_{workload}.dat"));
                let mut text = String::from("# config throughput read_mean read_p95 write_mean write_p95 error_pct\n");
                for r in rows {
                    text.push_str(&format!(
                        "{} {} {} {} {} {} {}\n",
                        r.config.label(),
                        r.throughput_ops_per_sec,
                        plot_value(r.read_latency_ms.mean),
                        plot_value(r.read_latency_ms.p95),
                        plot_value(r.write_latency_ms.mean),
                        plot_value(r.write_latency_ms.p95),
                        r.error_pct,
                    ));
                }
                fs::write(&path, text).map_err(io_err(&path))?;
                files.push(path);
            }
            Ok(files)
        }
    }
}

pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| BenchError::Json { path: path.to_path_buf(), source })
}
