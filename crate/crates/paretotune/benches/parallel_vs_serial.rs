//! Parallel-vs-sequential comparison for the data-parallel inner loops:
//! forest training, batch prediction, and pool-wide surrogate scans.
//!
//! With default features the `*/parallel` benches use the rayon paths and
//! the `*/serial` benches the sequential reference paths. Building with
//! `--no-default-features` leaves only the serial benches, which lets the
//! same suite measure the dependency-free build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use paretotune::evaluator::{BuiltinEvaluator, BuiltinSurface, EvaluationRequest, Evaluator};
use paretotune::space::FeatureVector;
use paretotune::spaces;
use paretotune::surrogate::{fit_forest, fit_forest_seq, ForestModel, ForestParams};

fn training_data(n: usize) -> (Vec<FeatureVector>, Vec<f64>) {
    let space = spaces::synth_kfusion();
    let configs = space.sample_random(n, 7).expect("n <= cardinality");
    let xs: Vec<FeatureVector> = configs.iter().map(|c| space.encode(c).unwrap()).collect();
    let evaluator = BuiltinEvaluator::new(BuiltinSurface::SynthKfusion, space).unwrap();
    let mut eval = evaluator;
    let requests: Vec<EvaluationRequest> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| EvaluationRequest { id: i as u64, config: c.clone() })
        .collect();
    let ys: Vec<f64> = eval
        .evaluate(&requests)
        .unwrap()
        .into_iter()
        .map(|r| match r.outcome {
            paretotune::evaluator::EvalOutcome::Ok(m) => m["runtime_s"],
            paretotune::evaluator::EvalOutcome::Failed(e) => panic!("{e}"),
        })
        .collect();
    (xs, ys)
}

fn bench_fit_forest(c: &mut Criterion) {
    let (xs, ys) = training_data(1000);
    let params = ForestParams { n_trees: 50, ..ForestParams::default() };
    let mut group = c.benchmark_group("fit_forest_1000x50");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| fit_forest(black_box(&xs), black_box(&ys), &params).unwrap())
    });
    group.bench_function("serial", |b| {
        b.iter(|| fit_forest_seq(black_box(&xs), black_box(&ys), &params).unwrap())
    });
    group.finish();
}

fn trained_model(xs: &[FeatureVector], ys: &[f64]) -> ForestModel {
    let params = ForestParams { n_trees: 50, ..ForestParams::default() };
    fit_forest_seq(xs, ys, &params).unwrap()
}

fn bench_predict_batch(c: &mut Criterion) {
    let (xs, ys) = training_data(1000);
    let model = trained_model(&xs, &ys);
    let space = spaces::synth_kfusion();
    let probes: Vec<FeatureVector> = space
        .sample_random(100_000, 13)
        .unwrap()
        .iter()
        .map(|c| space.encode(c).unwrap())
        .collect();
    let mut group = c.benchmark_group("predict_batch_100k");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| model.predict_batch(black_box(&probes)).unwrap())
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            probes
                .iter()
                .map(|x| model.predict(x.as_slice()).unwrap())
                .collect::<Vec<f64>>()
        })
    });
    group.finish();
}

fn bench_builtin_batch(c: &mut Criterion) {
    let space = spaces::synth_kfusion();
    let requests: Vec<EvaluationRequest> = space
        .sample_random(50_000, 23)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, config)| EvaluationRequest { id: i as u64, config })
        .collect();
    let mut group = c.benchmark_group("builtin_eval_50k");
    group.sample_size(10);
    // BuiltinEvaluator::evaluate follows the feature: rayon by default,
    // sequential without it. The explicit loop below is always sequential.
    let mut evaluator = BuiltinEvaluator::new(BuiltinSurface::SynthKfusion, space).unwrap();
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| evaluator.evaluate(black_box(&requests)).unwrap())
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            requests
                .iter()
                .map(|r| {
                    paretotune::evaluator::evaluate_builtin("synth-kfusion", &r.config).unwrap()
                })
                .collect::<Vec<_>>()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_fit_forest, bench_predict_batch, bench_builtin_batch);
criterion_main!(benches);
