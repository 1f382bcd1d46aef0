//! Sequential vs. data-parallel execution of the embarrassingly parallel
//! stages: the CARE grid behind the gain box, the containment multistarts,
//! the LMI restarts and a batch of closed-loop simulations.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lpvflow::bounds::{compute_gain_box, verify_containment, ContainmentOptions, GainBoxOptions};
use lpvflow::cert::{find_common_lyapunov, LmiSearchOptions};
use lpvflow::sim::{simulate_batch, SimConfig, SolverSettings};
use lpvflow::{Execution, HyperRectangle, Mat, ParamTrajectory, PolytopicLpvSystem};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn reference_box() -> HyperRectangle {
    HyperRectangle::new(vec![-0.94, 4.49], vec![-0.23, 5.97]).unwrap()
}

fn gain_box(c: &mut Criterion) {
    let sys = PolytopicLpvSystem::case_study();
    let mut group = c.benchmark_group("gain_box_grid");
    for (name, execution) in MODES {
        let opts = GainBoxOptions {
            grid_density: 256,
            execution,
            ..GainBoxOptions::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| compute_gain_box(&sys, &opts).unwrap())
        });
    }
    group.finish();
}

fn containment(c: &mut Criterion) {
    let sys = PolytopicLpvSystem::case_study();
    let b = reference_box();
    let mut group = c.benchmark_group("containment_multistart");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = ContainmentOptions {
            multistarts: 64,
            execution,
            ..ContainmentOptions::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| verify_containment(&sys, &b, &opts).unwrap())
        });
    }
    group.finish();
}

fn lmi_restarts(c: &mut Criterion) {
    // No common Lyapunov matrix exists, so every restart runs to its cap.
    let vertices = vec![
        Mat::from_rows(&[[-0.1, 1.0], [-10.0, -0.1]]),
        Mat::from_rows(&[[-0.1, 10.0], [-1.0, -0.1]]),
    ];
    let mut group = c.benchmark_group("lmi_restarts");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = LmiSearchOptions {
            restarts: 16,
            max_iters: 500,
            execution,
            ..LmiSearchOptions::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| find_common_lyapunov(&vertices, &opts).unwrap())
        });
    }
    group.finish();
}

fn simulations(c: &mut Criterion) {
    let sys = PolytopicLpvSystem::case_study();
    let b = reference_box();
    let configs: Vec<SimConfig> = (0..16)
        .map(|i| {
            let rho = 0.5 + 1.5 * i as f64 / 15.0;
            SimConfig {
                x0: vec![10.0, -5.0],
                k0: Mat::unvec(&b.center(), 1, 2).unwrap(),
                alpha: 100.0,
                horizon: 2.0,
                dt: 0.01,
                trajectory: ParamTrajectory::piecewise(vec![0.0, 1.0], vec![vec![rho], vec![2.5 - rho]]),
                solver: SolverSettings::default(),
            }
        })
        .collect();
    let mut group = c.benchmark_group("simulation_batch");
    group.sample_size(10);
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| simulate_batch(&sys, &b, &configs, execution))
        });
    }
    group.finish();
}

criterion_group!(benches, gain_box, containment, lmi_restarts, simulations);
criterion_main!(benches);
