use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use residuum::classifiers::{fit_forest, fit_logreg, ForestParams, LogRegParams};
use residuum::par;
use residuum::projection::{tsne2, TsneParams};
use residuum::regression::{default_lambda_grid, fit_ridge, fit_ridge_cv, predict};
use residuum::synthgen::{generate, SynthConfig, SynthDataset};

fn dataset(n_sentences: usize) -> SynthDataset {
    generate(&SynthConfig {
        n_sentences,
        ..Default::default()
    })
    .unwrap()
}

/// Runs `f` once on the thread pool and once pinned to the calling thread.
fn compare<R>(c: &mut Criterion, name: &str, f: impl Fn() -> R) {
    let mut group = c.benchmark_group(name);
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(5));
    group.bench_function("parallel", |b| b.iter(|| black_box(f())));
    group.bench_function("sequential", |b| b.iter(|| black_box(par::sequential(&f))));
    group.finish();
}

fn ridge(c: &mut Criterion) {
    let data = dataset(132);
    let grid = default_lambda_grid();
    compare(c, "ridge_cv", || {
        fit_ridge_cv(&data.text, &data.speech, &grid, 5, 1).unwrap()
    });
    let model = fit_ridge(&data.text, &data.speech, 0.1).unwrap();
    compare(c, "ridge_predict", || predict(&model, &data.text).unwrap());
}

fn classifiers(c: &mut Criterion) {
    let data = dataset(132);
    let y = data.manifest.tone_indices();
    let classes = data.manifest.label_set();
    let lr = LogRegParams {
        max_iter: 100,
        ..Default::default()
    };
    compare(c, "logreg_fit", || {
        fit_logreg(&data.speech, &y, classes, &lr).unwrap()
    });
    let forest = ForestParams {
        n_trees: 32,
        ..Default::default()
    };
    compare(c, "forest_fit", || {
        fit_forest(&data.speech, &y, classes, &forest).unwrap()
    });
}

fn tsne(c: &mut Criterion) {
    let data = dataset(25);
    let params = TsneParams {
        iterations: 250,
        ..Default::default()
    };
    compare(c, "tsne", || tsne2(&data.speech, &params).unwrap());
}

criterion_group!(benches, ridge, classifiers, tsne);
criterion_main!(benches);
