use std::hint::black_box;

use biasattn::autodiff::Graph;
use biasattn::model::{BiasFlags, Bound};
use biasattn::objectives::{composite_loss, LossOptions};
use biasattn::trainer::sgd_epoch;
use biasattn_bench::{copy_corpus, model};
use criterion::{criterion_group, criterion_main, Criterion};

fn forward_backward(c: &mut Criterion) {
    let corpus = copy_corpus(1, 0);
    let pair = &corpus[0];
    for (label, flags) in [
        ("none", BiasFlags::none()),
        ("align", BiasFlags::align()),
        ("all", BiasFlags::all()),
    ] {
        let m = model(32, flags, 23);
        let opts = LossOptions::from_model(&m);
        c.bench_function(&format!("forward_backward/{label}"), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let mut bounds = [Bound::new(&m)];
                let obj = composite_loss(&mut g, &mut bounds, black_box(pair), &opts).unwrap();
                black_box(g.backward(obj.loss).unwrap());
            })
        });
    }
}

fn epoch(c: &mut Criterion) {
    let corpus = copy_corpus(50, 0);
    let order: Vec<usize> = (0..corpus.len()).collect();
    let mut group = c.benchmark_group("sgd_epoch");
    group.sample_size(10);
    group.bench_function("align_50_pairs", |b| {
        b.iter_batched(
            || [model(16, BiasFlags::align(), 23)],
            |mut models| {
                let opts = LossOptions::from_model(&models[0]);
                sgd_epoch(&mut models, &corpus, &order, &[0.1], 5.0, &opts).unwrap()
            },
            criterion::BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, forward_backward, epoch);
criterion_main!(benches);
