use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use riskctl_core::oracles::{harmonic_chain, random_model, two_state_model, RandomModelSpec};
use riskctl_core::{
    harmonic_model, simulate, solve_eigen, solve_sequence, HarmonicSpec, Mode, SolverOptions,
    SweepOptions, TruncationScheme,
};

fn harmonic_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_eigen/harmonic");
    let opts = SolverOptions::default().with_max_iters(1_000_000);
    for n in [10usize, 50, 100] {
        let m = harmonic_model(HarmonicSpec::new(n, 1.0).unwrap());
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| solve_eigen(black_box(m), &opts).unwrap())
        });
    }
    g.finish();
}

fn random_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_eigen/random");
    for (states, actions) in [(10usize, 3usize), (50, 4), (200, 2)] {
        let m = random_model(1, RandomModelSpec::dense(states, actions));
        for mode in [Mode::Max, Mode::Min] {
            let opts = SolverOptions::default().with_mode(mode);
            g.bench_with_input(
                BenchmarkId::new(format!("{states}x{actions}"), mode),
                &m,
                |b, m| b.iter(|| solve_eigen(black_box(m), &opts).unwrap()),
            );
        }
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let m = Arc::new(harmonic_chain(33, 1.0));
    let scheme = TruncationScheme::default_for(&m).unwrap();
    c.bench_function("solve_sequence/harmonic 4..30", |b| {
        b.iter(|| solve_sequence(&m, &scheme, 4, 30, &SweepOptions::default()).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let m = two_state_model();
    let mut g = c.benchmark_group("simulate/two_state");
    g.sample_size(10);
    g.bench_function("m=2000 N=10000", |b| {
        b.iter(|| simulate(&m, &[0, 0], 0, 2000, 10_000, black_box(7), None).unwrap())
    });
    g.finish();
}

criterion_group!(benches, harmonic_solve, random_solve, sweep, simulation);
criterion_main!(benches);
