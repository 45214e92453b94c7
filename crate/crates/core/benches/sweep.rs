//! Parallel against sequential sweep execution, and the analytic quadratic
//! solver against the projected-gradient oracle.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ris_fdisac::config::ScenarioConfig;
use ris_fdisac::experiment::{Execution, Experiment, SweepSpec};
use ris_fdisac::oracle::{pg_qcqp, random_qcqp};
use ris_fdisac::orchestrator::{Mode, RunOptions};
use ris_fdisac::qcqp::solve_qcqp;

fn small_sweep(execution: Execution) -> Experiment {
    let mut base = ScenarioConfig::default().with_ris(8);
    base.n_users = 2;
    Experiment {
        base,
        sweep: SweepSpec {
            m: vec![4, 8],
            gamma_db: vec![0.0],
            si_db: Vec::new(),
            modes: vec![Mode::Full, Mode::RndRis],
            seeds: 4,
            master_seed: 7,
        },
        run: RunOptions {
            max_outer: 5,
            ..RunOptions::default()
        },
        execution,
    }
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, execution) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        let exp = small_sweep(execution);
        group.bench_function(name, |b| b.iter(|| black_box(exp.execute(None).unwrap())));
    }
    group.finish();
}

fn qcqp(c: &mut Criterion) {
    let mut group = c.benchmark_group("qcqp");
    group.sample_size(10);
    for n in [8, 32] {
        let p = random_qcqp(3, n);
        group.bench_with_input(BenchmarkId::new("analytic", n), &p, |b, p| b.iter(|| black_box(solve_qcqp(p, 1e-13).unwrap())));
        group.bench_with_input(BenchmarkId::new("projected_gradient", n), &p, |b, p| {
            b.iter(|| black_box(pg_qcqp(p, 20_000, None)))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, qcqp);
criterion_main!(benches);
