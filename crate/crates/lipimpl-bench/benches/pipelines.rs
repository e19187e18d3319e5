use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use lipimpl::perturb::solve_theta;
use lipimpl::{
    contraction_scan, integrate_system, problems, solve_implicit, Forcing, OscillatorSpec,
    SolverConfig,
};

fn vec1(x: f64) -> DVector<f64> {
    DVector::from_vec(vec![x])
}

fn bench_chord_solve(c: &mut Criterion) {
    let config = problems::cubic_config();
    let problem = problems::cubic(&config).unwrap();
    c.bench_function("solve_implicit/cubic x=0.5", |b| {
        b.iter(|| solve_implicit(&problem, &config, black_box(&vec1(0.5))).unwrap())
    });
}

fn bench_contraction_scan(c: &mut Criterion) {
    let config = SolverConfig {
        beta: 0.1,
        alpha: 0.05,
        ..problems::cubic_config()
    };
    let problem = problems::cubic(&config).unwrap();
    let xs = vec![vec1(0.0)];
    let ys: Vec<DVector<f64>> = (0..=100)
        .map(|i| vec1(-0.1 + 0.2 * i as f64 / 100.0))
        .collect();
    c.bench_function("contraction_scan/cubic 101 samples", |b| {
        b.iter(|| contraction_scan(&problem, &config, black_box(&xs), black_box(&ys)).unwrap())
    });
}

fn bench_integrator(c: &mut Criterion) {
    let spec = OscillatorSpec::new(1e-2, Forcing::Zero, [1.0, 0.0]).unwrap();
    let mut group = c.benchmark_group("integrate_system");
    group.sample_size(20);
    group.bench_function("eps=1e-2 one period", |b| {
        b.iter(|| integrate_system(&spec, black_box([1.0, 0.0])).unwrap())
    });
    group.finish();
}

fn bench_switch_time(c: &mut Criterion) {
    let spec = OscillatorSpec::new(1e-2, Forcing::Zero, [1.0, 0.0]).unwrap();
    let family = spec.family().unwrap();
    let config = SolverConfig::for_radius(family.radius());
    let eps = vec1(1e-2);
    // Warm the trajectory cache so the bench isolates the chord iteration.
    solve_theta(&family, &DVector::from_vec(vec![1.0, 0.0]), &eps, &config).unwrap();
    let mut group = c.benchmark_group("solve_theta");
    group.sample_size(40);
    group.bench_function("dry-friction cached trajectory", |b| {
        b.iter(|| {
            solve_theta(
                &family,
                black_box(&DVector::from_vec(vec![1.0, 0.0])),
                &eps,
                &config,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_chord_solve,
    bench_contraction_scan,
    bench_integrator,
    bench_switch_time
);
criterion_main!(benches);
