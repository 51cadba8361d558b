//! Command-line entry point. Exit codes: 0 success, 1 usage or validation
//! error, 2 runtime error. Diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bench::{self, BenchError, ExperimentConfig, ReportFormat};
use crate::netsim::{iperf_probe, ping_probe, Direction, Endpoint};
use crate::provision::{provision_all, render_wg_config, run_phase, DeploymentState, MockProvider};
use crate::topology::ClusterConfig;
use crate::workload::WorkloadLabel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "burstsim", version, about = "Hybrid-cloud provisioning and cloud-bursting benchmark simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the hybrid cloud against the mock provider.
    #[command(subcommand)]
    Provision(ProvisionCmd),
    /// Simulated ping and iperf measurements.
    #[command(subcommand)]
    Netprobe(NetprobeCmd),
    /// Run benchmark cells.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Convert stored results.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Subcommand)]
pub enum ProvisionCmd {
    /// Run phases 1-6 and write tunnel configs, routes and state.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Run only these phases, in the given order.
        #[arg(long = "phase")]
        phases: Vec<u8>,
    },
}

#[derive(Debug, Subcommand)]
pub enum NetprobeCmd {
    Ping {
        #[arg(long)]
        from: Endpoint,
        #[arg(long)]
        to: Endpoint,
        #[arg(long, default_value_t = 1000)]
        packets: u64,
        #[command(flatten)]
        config: OptionalConfigArgs,
    },
    Iperf {
        #[arg(long)]
        direction: Direction,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[command(flatten)]
        config: OptionalConfigArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Run a filtered part of the matrix; CSV goes to stdout without --out.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to one strategy label or kind.
        #[arg(long)]
        strategy: Option<String>,
        /// Restrict to one cluster config, e.g. 4_4.
        #[arg(long)]
        cluster: Option<ClusterConfig>,
    },
    /// Run the whole matrix and write results.csv, results.json and plots/.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Re-emit a results.json in another format.
    Emit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct OptionalConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Dotted-path override, e.g. profile.spike_probability=0.01
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args, Default)]
pub struct WorkloadArgs {
    /// Workloads to run (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub workload: Vec<WorkloadLabel>,
    #[arg(long)]
    pub load_count: Option<u64>,
    #[arg(long)]
    pub run_count: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io { .. } | BenchError::Csv { .. } | BenchError::Cell { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

/// Parse `argv` (including the program name) and run it.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Provision(ProvisionCmd::Run { config, out, phases }) => provision(&config, &out, &phases),
        Command::Netprobe(cmd) => netprobe(cmd),
        Command::Bench(BenchCmd::Run { config, workload, out, strategy, cluster }) => {
            let mut value = load_config(Some(&config.config), &config.overrides)?;
            apply_workload_args(&mut value, &workload)?;
            let mut matrix = parse_config(value)?.into_matrix()?;
            if let Some(s) = strategy {
                matrix.strategies.retain(|c| c.label.eq_ignore_ascii_case(&s)
                    || c.strategy.kind.as_str().eq_ignore_ascii_case(&s)
                    || c.strategy.kind.database().eq_ignore_ascii_case(&s));
            }
            if let Some(c) = cluster {
                matrix.configs.retain(|x| *x == c);
            }
            matrix.validate().map_err(|_| Failure::Invalid("filters leave no cells to run".into()))?;
            let result = bench::sweep(&matrix);
            match out {
                Some(dir) => write_all_reports(&result.records, &dir)?,
                None => {
                    let stdout = std::io::stdout();
                    bench::write_csv(&result.records, stdout.lock()).map_err(|e| Failure::Runtime(e.to_string()))?;
                }
            }
            report_failures(&result.failures)
        }
        Command::Bench(BenchCmd::Sweep { config, workload, out }) => {
            let mut value = load_config(Some(&config.config), &config.overrides)?;
            apply_workload_args(&mut value, &workload)?;
            let matrix = parse_config(value)?.into_matrix()?;
            let result = bench::sweep(&matrix);
            if !result.records.is_empty() {
                write_all_reports(&result.records, &out)?;
            }
            report_failures(&result.failures)
        }
        Command::Report(ReportCmd::Emit { input, format, out }) => {
            let records = bench::read_records(&input).map_err(|e| Failure::Invalid(e.to_string()))?;
            for path in bench::emit_report(&records, format, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn report_failures(failures: &[BenchError]) -> CliResult {
    for f in failures {
        eprintln!("cell failed: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} cell(s) failed", failures.len())))
    }
}

fn write_all_reports(records: &[bench::MetricsRecord], out: &Path) -> CliResult {
    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::PlotData] {
        bench::emit_report(records, format, out)?;
    }
    Ok(())
}

fn provision(args: &ConfigArgs, out: &Path, phases: &[u8]) -> CliResult {
    let config = parse_config(load_config(Some(&args.config), &args.overrides)?)?;
    config.topology.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
    let mut provider = MockProvider::new();
    let state = if phases.is_empty() {
        provision_all(&config.topology, &mut provider, config.seed).map_err(|e| Failure::Runtime(e.to_string()))?
    } else {
        let mut state = DeploymentState::new(config.topology.clone(), config.seed);
        for &phase in phases {
            state = run_phase(&state, phase, &mut provider)
                .map_err(|e| Failure::Runtime(format!("phase {phase}: {e}")))?;
        }
        state
    };
    let write = |name: &str, text: String| {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
    };
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    if let Some(tunnel) = &state.tunnel {
        let render = |c| render_wg_config(c).map_err(|e| Failure::Runtime(e.to_string()));
        write("donor-wg0.conf", render(&tunnel.donor)?)?;
        write("consumer-wg0.conf", render(&tunnel.consumer)?)?;
    }
    write("routes.json", serde_json::to_string_pretty(state.route_tables()).expect("routes serialize") + "\n")?;
    write("state.json", serde_json::to_string_pretty(&state).expect("state serializes") + "\n")?;
    Ok(())
}

fn netprobe(cmd: NetprobeCmd) -> CliResult {
    match cmd {
        NetprobeCmd::Ping { from, to, packets, config } => {
            if packets == 0 {
                return Err(Failure::Invalid("--packets must be at least 1".into()));
            }
            let profile = probe_profile(&config)?;
            let seed = config.overrides.seed.unwrap_or(profile.seed);
            let stats = ping_probe(&from.node(), &to.node(), packets, &profile, seed);
            let interval = profile.interval(from.datacenter(), to.datacenter());
            print_json(&json!({
                "from": from_name(from),
                "to": from_name(to),
                "configured_interval_ms": interval,
                "packets_sent": stats.packets_sent,
                "mean_ms": stats.mean_ms,
                "min_ms": stats.min_ms,
                "max_ms": stats.max_ms,
                "stddev_ms": stats.stddev_ms,
            }))
        }
        NetprobeCmd::Iperf { direction, duration, config } => {
            if !(duration > 0.0) {
                return Err(Failure::Invalid("--duration must be positive".into()));
            }
            let profile = probe_profile(&config)?;
            print_json(&serde_json::to_value(iperf_probe(direction, duration, &profile)).expect("report serializes"))
        }
    }
}

fn from_name(e: Endpoint) -> String {
    let (kind, dc) = match e {
        Endpoint::Broker(dc) => ("broker", dc),
        Endpoint::Shared(dc) => ("shared", dc),
    };
    format!("{kind}-{}", dc.as_str())
}

fn print_json(v: &Value) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
    Ok(())
}

fn probe_profile(args: &OptionalConfigArgs) -> Result<crate::netsim::NetworkProfile, Failure> {
    let value = load_config(args.config.as_deref(), &args.overrides)?;
    let config = parse_config(value)?;
    config.profile.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
    Ok(config.profile)
}

/// Read the experiment file (or an empty one for probes) and apply overrides.
fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<Value, Failure> {
    let mut value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?
        }
        None => json!({ "seed": 0 }),
    };
    if let Some(seed) = overrides.seed {
        set_path(&mut value, "seed", json!(seed))?;
    }
    if let Some(r) = overrides.repeats {
        set_path(&mut value, "repeats", json!(r))?;
    }
    for assignment in &overrides.set {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(format!("--set expects key=value, got `{assignment}`")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key.trim(), parsed)?;
    }
    Ok(value)
}

fn apply_workload_args(value: &mut Value, args: &WorkloadArgs) -> CliResult {
    if !args.workload.is_empty() {
        let labels: Vec<String> = args.workload.iter().map(ToString::to_string).collect();
        set_path(value, "workloads", json!(labels))?;
    }
    if let Some(n) = args.load_count {
        set_path(value, "workload_overrides.load_count", json!(n))?;
    }
    if let Some(n) = args.run_count {
        set_path(value, "workload_overrides.run_count", json!(n))?;
    }
    if let Some(n) = args.threads {
        set_path(value, "client_threads", json!(n))?;
    }
    Ok(())
}

fn parse_config(value: Value) -> Result<ExperimentConfig, Failure> {
    serde_json::from_value(value).map_err(|e| Failure::Invalid(format!("invalid experiment config: {e}")))
}

/// Set `a.b.c` in a JSON object tree, creating intermediate objects.
fn set_path(root: &mut Value, path: &str, new: Value) -> Result<(), Failure> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Failure::Invalid(format!("bad override key `{path}`")))?;
    let mut cur = root;
    for part in parts {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Failure::Invalid(format!("override `{path}`: `{part}` is not inside an object")))?;
        cur = obj.entry(part).or_insert_with(|| json!({}));
    }
    cur.as_object_mut()
        .ok_or_else(|| Failure::Invalid(format!("override `{path}` does not address an object field")))?
        .insert(last.to_string(), new);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides() {
        let mut v = json!({ "seed": 1, "profile": { "spike_probability": 0.0 } });
        set_path(&mut v, "profile.spike_probability", json!(0.05)).unwrap();
        set_path(&mut v, "workload_overrides.run_count", json!(10)).unwrap();
        assert_eq!(v["profile"]["spike_probability"], json!(0.05));
        assert_eq!(v["workload_overrides"]["run_count"], json!(10));
        assert!(set_path(&mut v, "seed.x", json!(1)).is_err());
        assert!(set_path(&mut v, "", json!(1)).is_err());
    }

    #[test]
    fn set_values_parse_as_json_then_string() {
        let o = Overrides { set: vec!["timeout_ms=900".into(), "topology.private.name=lab".into()], ..Default::default() };
        let v = load_config(None, &o).unwrap();
        assert_eq!(v["timeout_ms"], json!(900));
        assert_eq!(v["topology"]["private"]["name"], json!("lab"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(dispatch(["burstsim", "frobnicate"]), EXIT_INVALID);
        assert_eq!(dispatch(["burstsim"]), EXIT_INVALID);
        assert_eq!(dispatch(["burstsim", "bench", "sweep", "--config", "/nonexistent.json", "--out", "/tmp/x"]), EXIT_INVALID);
        assert_eq!(dispatch(["burstsim", "--help"]), EXIT_OK);
    }
}
