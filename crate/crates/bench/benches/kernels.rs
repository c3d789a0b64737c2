use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncm_bench::{lorenz_trajectory, random_model};
use ncm_core::cvstem::{assemble, CvstemConfig, Variant};
use ncm_core::dynamics::{integrate, make_lorenz};
use ncm_core::sdp::solve_with;
use ncm_core::DVector;
use std::hint::black_box;

fn sdp(c: &mut Criterion) {
    let sys = make_lorenz();
    let cfg = CvstemConfig {
        variant: Variant::Estimator,
        ..CvstemConfig::default()
    };
    let mut group = c.benchmark_group("cvstem_estimator_solve");
    group.sample_size(10);
    for steps in [10, 25, 50] {
        let traj = lorenz_trajectory(steps);
        let prob = assemble(&traj, &sys, 3.0, &cfg).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(steps), &prob, |b, p| {
            b.iter(|| solve_with(black_box(&p.sdp), &cfg.solver_options()).unwrap())
        });
    }
    group.finish();
}

fn lstm(c: &mut Criterion) {
    let mut group = c.benchmark_group("lstm_forward");
    for hidden in [16, 32, 64] {
        let (model, xs) = random_model(hidden, 2, 50);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &xs, |b, xs| {
            b.iter(|| model.forward(black_box(xs), &[]).unwrap())
        });
    }
    group.finish();
}

fn rk4(c: &mut Criterion) {
    let sys = make_lorenz();
    let x0 = DVector::from_vec(vec![-1.0, 2.0, 3.0]);
    c.bench_function("rk4_lorenz_500_steps", |b| {
        b.iter(|| {
            integrate(&sys, black_box(&x0), &mut |_, _| DVector::zeros(0), &mut |_| DVector::zeros(0), 0.1, 500).unwrap()
        })
    });
}

criterion_group!(benches, sdp, lstm, rk4);
criterion_main!(benches);
