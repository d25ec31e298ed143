use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use meterlink_core::dataio::{generate_synthetic, SyntheticLoadConfig};
use meterlink_core::{
    avg_outage, evaluate, event_sample, max_range, simulate_outage, time_sample, tune_thresholds,
    EventThresholds, LinkParams, OracleConfig, SfTable, SpreadingFactor,
};

fn link_model(c: &mut Criterion) {
    let table = SfTable::default();
    let params = LinkParams::default();
    c.bench_function("avg_outage", |b| {
        b.iter(|| avg_outage(black_box(&params), &table))
    });
    c.bench_function("max_range", |b| {
        b.iter(|| max_range(black_box(0.3), &params, &table).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let table = SfTable::default();
    let cfg = OracleConfig::new(LinkParams::default(), SpreadingFactor::ALL[0], 10_000, 7);
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("simulate_outage_10k", |b| {
        b.iter(|| simulate_outage(black_box(&cfg), &table).unwrap())
    });
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let cfg = SyntheticLoadConfig {
        seed: 3,
        ..Default::default()
    };
    let house = generate_synthetic(&cfg, 1, 7).unwrap().remove(0).series;
    let th = EventThresholds::default();
    let budget = time_sample(&house, 30).unwrap();
    c.bench_function("event_sample_week", |b| {
        b.iter(|| event_sample(black_box(&house), &th))
    });
    c.bench_function("tune_thresholds_week", |b| {
        b.iter(|| tune_thresholds(black_box(&house), &th, &budget).unwrap())
    });

    let tuned = tune_thresholds(&house, &th, &budget).unwrap().samples;
    let sets = [budget.clone(), tuned];
    let mut g = c.benchmark_group("reconstruction");
    g.sample_size(10);
    g.bench_function("evaluate_week_100_runs", |b| {
        b.iter(|| evaluate(black_box(&house), &sets, &[0.0, 0.1, 0.2, 0.3], 100, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, link_model, oracle, sampling);
criterion_main!(benches);
