//! Sequential vs parallel execution of the data-parallel kernels.
//! Build without default features to bench the sequential-only library.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diagsearch::criteria::CriteriaContext;
use diagsearch::model::rng_from_seed;
use diagsearch::search::operators::random_individual;
use diagsearch::search::{ga_search, GaConfig};
use diagsearch::simulator::{simulate, SimConfig};
use diagsearch::Execution;

fn modes() -> Vec<Execution> {
    let mut m = vec![Execution::Sequential];
    if cfg!(feature = "parallel") {
        m.push(Execution::Parallel);
    }
    m
}

fn label(e: Execution) -> &'static str {
    match e {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn kernels(c: &mut Criterion) {
    let sim = simulate(&SimConfig {
        seed: 1,
        ..SimConfig::default()
    })
    .unwrap();
    let snapshot = sim.true_snapshot;
    let mut rng = rng_from_seed(2);
    let population: Vec<Vec<usize>> = (0..1000).map(|_| random_individual(50, 10, &mut rng)).collect();

    let mut group = c.benchmark_group("evaluate_batch_1000x10");
    for exec in modes() {
        let obj = CriteriaContext::all_learners(&snapshot)
            .unwrap()
            .with_execution(exec)
            .with_lambda(0.5)
            .unwrap();
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| obj.evaluate_batch(black_box(&population)))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("calibrate_lambda_10000");
    group.sample_size(10);
    for exec in modes() {
        let ctx = CriteriaContext::all_learners(&snapshot).unwrap().with_execution(exec);
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| ctx.calibrate_lambda(10, 10_000, black_box(3)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("ga_1000x5");
    group.sample_size(10);
    for exec in modes() {
        let obj = CriteriaContext::all_learners(&snapshot)
            .unwrap()
            .with_execution(exec)
            .with_lambda(0.5)
            .unwrap();
        let cfg = GaConfig {
            seed: 4,
            ..GaConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| ga_search(&obj, black_box(&cfg)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("simulate_6000x50");
    group.sample_size(10);
    for exec in modes() {
        let cfg = SimConfig {
            seed: 5,
            execution: exec,
            ..SimConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| simulate(black_box(&cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
