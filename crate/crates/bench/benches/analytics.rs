use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hybridmac_bench::{mixture, network};
use hybridmac_core::analytics::{expected_tcop, success_shares};
use hybridmac_core::optimizer::{optimize_grid, plan_for};
use hybridmac_core::{GridAxes, TimingConstants};

fn cop_expectation(c: &mut Criterion) {
    let tc = TimingConstants::default();
    let mut group = c.benchmark_group("expected_tcop");
    for classes in [1, 4, 8] {
        let mix = mixture(classes, 1200.0 / classes as f64, 0.0002);
        group.bench_with_input(BenchmarkId::from_parameter(classes), &mix, |b, mix| {
            b.iter(|| expected_tcop(black_box(400), mix, &tc).unwrap())
        });
    }
    group.finish();
}

fn shares(c: &mut Criterion) {
    let mut group = c.benchmark_group("success_shares");
    for classes in [2, 6, 10] {
        let mix = mixture(classes, 50.0, 0.0005);
        group.bench_with_input(BenchmarkId::from_parameter(classes), &mix, |b, mix| {
            b.iter(|| success_shares(black_box(mix)).unwrap())
        });
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let (cfg, tc) = network(1200, 0.001);
    c.bench_function("plan_for/K=1200/10 frames", |b| b.iter(|| plan_for(black_box(&cfg), &tc, 10).unwrap()));
    let mut group = c.benchmark_group("optimize_grid");
    group.sample_size(10);
    group.bench_function("table/K=1200/10 frames", |b| {
        b.iter(|| optimize_grid(black_box(&cfg), &tc, 10, &GridAxes::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, cop_expectation, shares, planning);
criterion_main!(benches);
