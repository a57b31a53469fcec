use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cadnn::train::{fit, sample_gradients, FitOptions, OptimizerKind};
use cadnn::zoo::{proposed_cnn, residual_style, vgg_style, ResidualProfile, VggProfile};
use cadnn::RngState;
use cadnn_bench::textures;

const SIZE: usize = 32;

fn per_sample(c: &mut Criterion) {
    let input = [1, SIZE, SIZE];
    let specs = [
        proposed_cnn(input, 2, 1).unwrap(),
        vgg_style(input, 2, &VggProfile::desk()).unwrap(),
        residual_style(input, 2, &ResidualProfile::desk()).unwrap(),
    ];
    let sample = &textures(1, SIZE)[0];
    let mut group = c.benchmark_group("sample_gradients");
    for spec in &specs {
        let model = spec.build(&mut RngState::new(0)).unwrap();
        group.bench_function(&spec.name, |b| {
            b.iter(|| sample_gradients(black_box(&model), black_box(&sample.input), sample.label).unwrap())
        });
    }
    group.finish();
}

fn epoch(c: &mut Criterion) {
    let train = textures(16, SIZE);
    let model = proposed_cnn([1, SIZE, SIZE], 2, 1).unwrap().build(&mut RngState::new(0)).unwrap();
    let opts = FitOptions {
        epochs: 1,
        batch_size: 8,
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-3,
        parallel: false,
    };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("proposed_one_epoch_32_images", |b| {
        b.iter_batched(
            || model.clone(),
            |mut m| fit(&mut m, &train, &[], &opts, &mut RngState::new(1)).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, per_sample, epoch);
criterion_main!(benches);
