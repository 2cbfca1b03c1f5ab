use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fedcomm_core::compression::stc_encode;
use fedcomm_core::data::{synth_generate, synth_train_test};
use fedcomm_core::engine::run_federated;
use fedcomm_core::nn::{gradient, init_model};
use fedcomm_core::{Batch, FederatedConfig, ModelArch, Residual};

fn mnist_sized_gradient(c: &mut Criterion) {
    let data = synth_generate(10, 2, 784, 1).unwrap();
    let arch = ModelArch::mlp(784, &[200], 10).unwrap();
    let params = init_model(&arch, 1);
    let batch = Batch::whole(&data);
    c.bench_function("gradient 784-200-10, batch 20", |b| {
        b.iter(|| gradient(black_box(&params), black_box(&batch)).unwrap())
    });
}

fn stc_encoding(c: &mut Criterion) {
    let dim = 159_010;
    let vec: Vec<f64> = (0..dim)
        .map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5)
        .collect();
    let residual = Residual::zeros(dim);
    c.bench_function("stc encode 159010, 1%", |b| {
        b.iter(|| stc_encode(black_box(&vec), 0.01, black_box(&residual)).unwrap())
    });
}

fn fedavg_round(c: &mut Criterion) {
    let (train, test) = synth_train_test(10, 100, 10, 784, 2).unwrap();
    let cfg = FederatedConfig {
        rounds: 1,
        ..FederatedConfig::default()
    };
    let mut group = c.benchmark_group("fedavg");
    group.sample_size(10);
    group.bench_function("one round, 10 of 100 clients", |b| {
        b.iter(|| run_federated(black_box(&cfg), &train, &test).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mnist_sized_gradient, stc_encoding, fedavg_round);
criterion_main!(benches);
