//! One worker against the full pool on the data-parallel paths. Built without
//! the `parallel` feature both variants run sequentially, which gives the
//! fallback baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maxent_income::empirical::{self, BoltzmannBody, IncomeSample, TwoClassConfig};
use maxent_income::ensemble::{self, EnsembleMode, EnsembleSpec};
use maxent_income::pareto::{self, TailModel};
use maxent_income::{par, EconomyParams, IncomeGrid};
use rand::Rng;
use std::hint::black_box;

fn workers() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("single", 1), ("pool", all)]
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_continuous");
    let spec = EnsembleSpec::new(
        EconomyParams::continuous(50, 500.0).unwrap(),
        EnsembleMode::SampleContinuous,
        100_000,
        7,
    )
    .unwrap();
    for (name, threads) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    ensemble::sample_uniform(black_box(&spec)).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn histogram(c: &mut Criterion) {
    let mut group = c.benchmark_group("macrostate_histogram");
    let spec = EnsembleSpec::new(
        EconomyParams::new(20, 100.0, 1.0).unwrap(),
        EnsembleMode::SampleDiscrete,
        100_000,
        11,
    )
    .unwrap();
    let grid = IncomeGrid::build(0.0, 101.0, 10, vec![1; 10]).unwrap();
    for (name, threads) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    ensemble::macrostate_histogram(black_box(&spec), &grid).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn xmin_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("power_law_xmin_scan");
    let graph = pareto::generate_preferential_attachment(100_000, 2, 3).unwrap();
    let incomes = pareto::degrees_to_income(&graph, 1.0).unwrap();
    for (name, threads) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    pareto::fit_power_law(black_box(&incomes)).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn two_class(c: &mut Criterion) {
    let mut group = c.benchmark_group("two_class_fit");
    group.sample_size(10);
    let body = BoltzmannBody {
        temperature: 1.0,
        upper_cut: 3.0,
        n_body: 0,
        ks: 0.0,
    };
    let tail = TailModel::new(2.0, 3.0).unwrap();
    let mut rng = maxent_income::rng::stream(5);
    let values = (0..50_000)
        .map(|_| {
            if rng.random::<f64>() < 0.95 {
                body.draw(&mut rng)
            } else {
                tail.draw(&mut rng)
            }
        })
        .collect();
    let sample = IncomeSample::new(values, "bench").unwrap();
    let config = TwoClassConfig {
        bootstrap: 20,
        seed: 9,
        ..TwoClassConfig::default()
    };
    for (name, threads) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    empirical::fit_two_class(black_box(&sample), &config).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sampling, histogram, xmin_scan, two_class);
criterion_main!(benches);
