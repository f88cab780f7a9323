use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use tabshift::data::{Cell, ColumnSpec, Dataset, FeatureSchema, GroupedDataset, Task};
use tabshift::mmd::{mmd_unbiased, permutation_test, Kernel};
use tabshift::models::{
    gradient, train, ForestConfig, LearnerSpec, ModelParams, OptimizerConfig, RegularizerSpec,
    TrainConfig, TrainedModel,
};
use tabshift::rng::rng_for;

fn gaussian_samples(n: usize, dim: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = rng_for(seed, &[1]);
    (0..n)
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng) + shift).collect())
        .collect()
}

fn classification_pair(m: usize, n: usize, dim: usize, seed: u64) -> GroupedDataset {
    let mut rng = rng_for(seed, &[2]);
    let mut build = |count: usize, prefix: &str| {
        let mut columns: Vec<ColumnSpec> =
            (0..dim).map(|i| ColumnSpec::continuous(&format!("x{i}"))).collect();
        columns.push(ColumnSpec::class_label("y", &["neg", "pos"]));
        let schema = FeatureSchema::new(columns).unwrap();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for i in 0..count {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let label = u32::from(x[0] + 0.5 * x[1 % dim] > 0.0);
            ids.push(format!("{prefix}{i:05}"));
            let mut row: Vec<Cell> = x.into_iter().map(Cell::Number).collect();
            row.push(Cell::Category(label));
            rows.push(row);
        }
        Dataset::new(schema, ids, rows).unwrap()
    };
    let source = build(m, "s");
    let target = build(n, "t");
    GroupedDataset::new(source, target).unwrap()
}

fn train_config() -> TrainConfig {
    TrainConfig {
        alpha: 0.3,
        regularizer: RegularizerSpec::l2(0.05),
        optimizer: OptimizerConfig {
            step_size: 0.3,
            batch_size: None,
            epochs: 30,
            seed: 0,
            grad_tol: None,
        },
        task: Task::BinaryClassification,
    }
}

fn bench_mmd(c: &mut Criterion) {
    let xs = gaussian_samples(100, 8, 0.0, 3);
    let ys = gaussian_samples(100, 8, 0.5, 4);
    let kernel = Kernel::rbf(2.0).unwrap();
    c.bench_function("mmd_unbiased_100x8", |b| {
        b.iter(|| black_box(mmd_unbiased(&xs, &ys, &kernel).unwrap()))
    });
    c.bench_function("permutation_test_100x8_b199", |b| {
        b.iter(|| black_box(permutation_test(&xs, &ys, &kernel, 199, 7).unwrap()))
    });
}

fn bench_weighted_erm(c: &mut Criterion) {
    let pair = classification_pair(400, 100, 10, 5);
    let cfg = train_config();
    let spec = LearnerSpec::linear();
    c.bench_function("train_linear_500x10_30_epochs", |b| {
        b.iter(|| black_box(train(&pair, &spec, &cfg).unwrap()))
    });
    let TrainedModel::Linear(model) = train(&pair, &spec, &cfg).unwrap() else {
        unreachable!()
    };
    let params: ModelParams = model.params;
    c.bench_function("gradient_linear_500x10", |b| {
        b.iter(|| black_box(gradient(&spec, &params, &pair, &cfg).unwrap()))
    });
}

fn bench_forest(c: &mut Criterion) {
    let pair = classification_pair(400, 0, 10, 9);
    let mut cfg = train_config();
    cfg.alpha = 0.0;
    let spec = LearnerSpec::Forest(ForestConfig {
        n_trees: 16,
        max_depth: 6,
        ..ForestConfig::default()
    });
    c.bench_function("forest_16_trees_400x10", |b| {
        b.iter(|| black_box(train(&pair, &spec, &cfg).unwrap()))
    });
}

criterion_group!(benches, bench_mmd, bench_weighted_erm, bench_forest);
criterion_main!(benches);
