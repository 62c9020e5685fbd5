use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sgdrisk::oracles::{full_matrix_step, random_psd, FullState};
use sgdrisk::{evolve_split, risk_report, step_m, tail_streaming, StateVector};
use sgdrisk_bench::{power_law, window, DIMS};

fn bench_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_m");
    for d in DIMS {
        let spec = power_law(d);
        let m = StateVector::new(spec.m0_bias().to_vec(), 0);
        group.bench_with_input(BenchmarkId::from_parameter(d), &m, |b, m| {
            b.iter(|| step_m(black_box(m), &spec).unwrap())
        });
    }
    group.finish();
}

fn bench_evolve(c: &mut Criterion) {
    let spec = power_law(256);
    c.bench_function("evolve_split/d256_T1000", |b| b.iter(|| evolve_split(black_box(&spec), 1000)));
}

fn bench_tail(c: &mut Criterion) {
    let mut group = c.benchmark_group("tail_streaming");
    group.sample_size(10);
    let spec = power_law(1000);
    for (s, n) in [(100, 100), (1000, 1000), (10_000, 10_000)] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("s{s}_N{n}")), &window(s, n), |b, w| {
            b.iter(|| tail_streaming(black_box(&spec), *w))
        });
    }
    group.finish();
}

fn bench_report(c: &mut Criterion) {
    let spec = power_law(1000);
    let w = window(1000, 1000);
    c.bench_function("risk_report/d1000_s1000_N1000", |b| b.iter(|| risk_report(black_box(&spec), w).unwrap()));
}

fn bench_full_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_matrix_step");
    for d in [8, 32, 64] {
        let spec = power_law(d);
        let state = FullState::new(random_psd(d, 0)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &state, |b, st| {
            b.iter(|| full_matrix_step(black_box(st), &spec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_step, bench_evolve, bench_tail, bench_report, bench_full_matrix);
criterion_main!(benches);
