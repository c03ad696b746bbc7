//! Forward and backward costs of the dense core at desk-model sizes.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mtgen_bench::desk_classifier;
use mtgen_core::autodiff::{Dense, DropoutMode, Tape};
use mtgen_core::cvae::sample_standard_normal;
use mtgen_core::seeds;

fn dense_layer(c: &mut Criterion) {
    let mut rng = seeds::rng(3);
    let layer = Dense::new(256, 128, &mut rng);
    let batch = sample_standard_normal(vec![64, 256], &mut rng);

    c.bench_function("dense_forward_64x256x128", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let x = tape.leaf(black_box(&batch));
            let vars = layer.bind(&mut tape);
            let out = vars.forward(&mut tape, x).unwrap();
            black_box(tape.value(out).data()[0])
        })
    });

    c.bench_function("dense_forward_backward_64x256x128", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let x = tape.leaf(black_box(&batch));
            let vars = layer.bind(&mut tape);
            let out = vars.forward(&mut tape, x).unwrap();
            let act = tape.relu(out).unwrap();
            let loss = tape.mean_all(act).unwrap();
            let grads = tape.backward(loss).unwrap();
            black_box(grads.get(vars.weights).unwrap().data()[0])
        })
    });
}

fn classifier_passes(c: &mut Criterion) {
    let model = desk_classifier();
    let mut rng = seeds::rng(4);
    let image = sample_standard_normal(vec![256], &mut rng);
    let image = mtgen_core::Tensor::new(
        vec![256],
        image.data().iter().map(|v| v.abs().min(1.0)).collect(),
    )
    .unwrap();

    c.bench_function("classifier_predict", |b| {
        use mtgen_core::harness::ModelUnderTest;
        b.iter(|| black_box(model.predict(black_box(&image)).unwrap().0))
    });

    c.bench_function("mc_uncertainty_32_passes", |b| {
        use mtgen_core::harness::ModelUnderTest;
        let mut mc_rng = seeds::rng(5);
        b.iter(|| {
            black_box(
                model
                    .mc_uncertainty(black_box(&image), 32, &mut mc_rng)
                    .unwrap()
                    .sigma,
            )
        })
    });
}

fn dropout_mask(c: &mut Criterion) {
    let mut rng = seeds::rng(6);
    let batch = sample_standard_normal(vec![64, 128], &mut rng);
    c.bench_function("dropout_64x128", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let x = tape.leaf(black_box(&batch));
            let out = tape.dropout(x, 0.5, DropoutMode::Train, &mut rng).unwrap();
            black_box(tape.value(out).data()[0])
        })
    });
}

criterion_group!(benches, dense_layer, classifier_passes, dropout_mask);
criterion_main!(benches);
