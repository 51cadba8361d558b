use criterion::{criterion_group, criterion_main, Criterion};

use burstsim::bench::{sweep_with, Execution, ExperimentConfig, ExperimentMatrix, WorkloadOverrides};

fn matrix() -> ExperimentMatrix {
    let mut cfg = ExperimentConfig::reference(7);
    cfg.workload_overrides = WorkloadOverrides { load_count: Some(1_000), run_count: Some(500), scan_max: None };
    cfg.into_matrix().expect("reference matrix")
}

fn sweep(c: &mut Criterion) {
    let m = matrix();
    let mut group = c.benchmark_group("sweep_288_cells");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| sweep_with(&m, Execution::Sequential)));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| b.iter(|| sweep_with(&m, Execution::Parallel)));
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
