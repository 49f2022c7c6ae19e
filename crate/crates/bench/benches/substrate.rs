use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uprop::baselines::mc_rollout;
use uprop::data::{ar_seasonal, NormStats};
use uprop::forecaster::{
    filter_series, rollout, sequence_loss_grad, ModelConfig, SequencePlan, UPropModel,
};
use uprop::rng::seeded;
use uprop::DistVector;

fn model(hidden: usize) -> UPropModel {
    let cfg = ModelConfig {
        hidden,
        ..ModelConfig::new(3)
    };
    UPropModel::new(cfg, NormStats::identity(3), 1).unwrap()
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for hidden in [32, 64] {
        let m = model(hidden);
        let input = DistVector::new(vec![0.1, -0.2, 0.3], vec![0.0, 0.5, 0.0]).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &m, |b, m| {
            let mut h = m.initial_state();
            b.iter(|| m.step_mut(black_box(&input), &mut h).unwrap())
        });
    }
    group.finish();
}

fn forecasting(c: &mut Criterion) {
    let m = model(64);
    let series = ar_seasonal(3, 120, 2);
    let context: Vec<DistVector> = (0..100).map(|t| series.row_certain(t)).collect();
    c.bench_function("rollout/100+16", |b| {
        b.iter(|| rollout(&m, black_box(&context), 16).unwrap())
    });
    c.bench_function("filter/120", |b| {
        b.iter(|| filter_series(&m, black_box(&series)).unwrap())
    });
    c.bench_function("mc_rollout/100+16x100", |b| {
        b.iter(|| mc_rollout(&m, black_box(&context), 16, 100, 3).unwrap())
    });
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("window_gradient");
    let series = ar_seasonal(3, 120, 3);
    for k in [2, 16] {
        let m = model(64);
        let plan = SequencePlan::training(&series, 120 - k, k).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(k), &plan, |b, plan| {
            let mut rng = seeded(4);
            b.iter(|| sequence_loss_grad(&m, plan, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, step, forecasting, gradient);
criterion_main!(benches);
