//! Sequential against data-parallel execution of the three batch workloads.

use std::hint::black_box;
use std::time::Duration;

use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use lienet::equilibria::{RecordSelection, assess_stability, momentum_equilibria};
use lienet::exec::Execution;
use lienet::statmech::orbit_thermo_single;
use lienet::sweep::{InitialCondition, OrbitLevels, SweepConfig, TemperatureGrid, run_sweep};
use lienet::{Coupling, Network, Tensor};
use nalgebra::{Matrix3, Vector3};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn diag() -> Tensor {
    Tensor::from_diagonal(&Vector3::new(1.0, 2.0, 3.0))
}

fn sweep_cells(c: &mut Criterion) {
    let net = Network::lattice_2d(6, 6, true, diag(), Tensor::identity()).unwrap();
    let cfg = SweepConfig {
        coupling: Coupling::Momentum,
        temperatures: TemperatureGrid::Linear { min: 0.05, max: 1.0, count: 8 },
        replicas: 2,
        theta: 1.0,
        dt: 0.01,
        steps: 500,
        record_every: 10,
        burn_in: 0.5,
        projection: true,
        seed: 1,
        initial: InitialCondition::RandomOnOrbit,
        levels: OrbitLevels::default(),
        anneal: None,
        drift_threshold: 1e-6,
    };
    let mut group = c.benchmark_group("sweep_cells");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(run_sweep(&net, &cfg, mode).unwrap()))
        });
    }
    group.finish();
}

fn orbit_estimator(c: &mut Criterion) {
    let inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
    let mut group = c.benchmark_group("orbit_estimator");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(orbit_thermo_single(&inertia, 1.0, 2.0, 200_000, 3, mode).unwrap()))
        });
    }
    group.finish();
}

fn stability_batch(c: &mut Criterion) {
    let net = Network::lattice_2d(4, 4, true, diag(), Tensor::identity()).unwrap();
    let records = momentum_equilibria(&net, 0.5).unwrap();
    let mut group = c.benchmark_group("stability_batch");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                let mut batch = records.clone();
                assess_stability(&net, &mut batch, RecordSelection::All, mode).unwrap();
                black_box(batch)
            })
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().measurement_time(Duration::from_secs(5));
    targets = sweep_cells, orbit_estimator, stability_batch
}
criterion_main!(benches);
