use std::hint::black_box;

use amdi_core::optimizer::SearchSpace;
use amdi_core::stats::{chernoff_expected_bounds, sampling_gap};
use amdi_core::{evaluate, optimize, simulate, FailureProb, Scenario};
use criterion::{criterion_group, criterion_main, Criterion};

fn bounds(c: &mut Criterion) {
    let eps = FailureProb::new(1.565e-10).unwrap();
    c.bench_function("chernoff_expected_bounds", |b| {
        b.iter(|| chernoff_expected_bounds(black_box(1.234e6), eps))
    });
    c.bench_function("sampling_gap", |b| {
        b.iter(|| sampling_gap(black_box(3.1e7), black_box(2.2e5), black_box(0.04), eps))
    });
}

fn key_rate(c: &mut Criterion) {
    let short = Scenario::no_tracking(300.0);
    c.bench_function("evaluate_short_300km", |b| b.iter(|| evaluate(black_box(&short))));
    let arb = Scenario::arbitrary(500.0, 1e13);
    c.bench_function("evaluate_arbitrary_500km", |b| b.iter(|| evaluate(black_box(&arb))));
}

fn search(c: &mut Criterion) {
    let sc = Scenario::no_tracking(300.0);
    let mut space = SearchSpace::from(&sc.optimizer);
    space.population = 16;
    space.generations = 10;
    let mut g = c.benchmark_group("optimize");
    g.sample_size(10);
    g.bench_function("short_16x10", |b| b.iter(|| optimize(black_box(&sc), &space, &[])));
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let sc = Scenario::no_tracking(100.0);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("short_1e6_pulses", |b| b.iter(|| simulate(black_box(&sc), 1_000_000, 7)));
    g.finish();
}

criterion_group!(benches, bounds, key_rate, search, monte_carlo);
criterion_main!(benches);
