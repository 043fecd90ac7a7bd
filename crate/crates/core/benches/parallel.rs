//! Sequential against data-parallel execution on the two path-heavy workloads.

use cpmm_core::exec::Execution;
use cpmm_core::simulation::{hedge_study, mc_token_value};
use cpmm_core::MarketParams;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn strategies() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn params() -> MarketParams {
    MarketParams::from_bps(0.05, 0.2582, 2.0, 5.0).unwrap()
}

fn mc_valuation(c: &mut Criterion) {
    let p = params();
    let mut group = c.benchmark_group("mc_token_value");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::new(name, 200_000), &exec, |b, &exec| {
            b.iter(|| mc_token_value(1842.31, &p, 200_000, 1e-6, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn hedging(c: &mut Criterion) {
    let p = params();
    let mut group = c.benchmark_group("hedge_study");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::new(name, "16x20000"), &exec, |b, &exec| {
            b.iter(|| hedge_study(1842.31, 20_000, &p, 16, 7, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mc_valuation, hedging);
criterion_main!(benches);
