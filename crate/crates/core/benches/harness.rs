//! Sequential against rayon execution for the two parallel hot paths:
//! Monte Carlo replicates and permutation batches.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctxql::changepoint::{detect_rows, DetectorConfig, Method};
use ctxql::config::ExperimentConfig;
use ctxql::eval::run_experiment;
use ctxql::rng::stream;
use ctxql::Execution;
use rand_distr::{Distribution, Normal};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

const SMALL: &str = r#"
name = "bench"
runs = 8
seed = 11

[environment]
kind = "random"
n_states = 5
n_actions = 5

[schedule]
horizon = 1000
changepoints = [500]

[[agents]]
kind = "ql"

[[agents]]
kind = "probe"
method = "odcp"
epsilon = 0.1
"#;

fn replicates(c: &mut Criterion) {
    let config = ExperimentConfig::from_toml(SMALL).unwrap();
    let mut group = c.benchmark_group("replicates");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment(&config, exec).unwrap())
        });
    }
    group.finish();
}

fn permutations(c: &mut Criterion) {
    let mut rng = stream(5, 0);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..600)
        .map(|i| {
            let shift = if i < 300 { 0.0 } else { 1.0 };
            (0..3).map(|_| shift + noise.sample(&mut rng)).collect()
        })
        .collect();
    let mut group = c.benchmark_group("permutations");
    group.sample_size(10);
    for method in [Method::Odcp, Method::Ecp] {
        for (name, exec) in MODES {
            let config = DetectorConfig { execution: exec, ..DetectorConfig::default() };
            group.bench_function(BenchmarkId::new(format!("{method:?}"), name), |b| {
                b.iter(|| detect_rows(&rows, method, &config, &mut stream(9, 0)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicates, permutations);
criterion_main!(benches);
