//! Hot paths of the pipeline: query extraction, the ranker's forward and
//! training step, and AUC over a full evaluation split.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use decontext_core::metrics::auc_roc;
use decontext_core::pipeline::synth::{random_graph, separable_training_set};
use decontext_core::ranker::{loss_and_gradient, train, Hyperparams};
use decontext_core::{extract_queries, LabeledPrediction, PairLabel, RankerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_extraction(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let graphs: Vec<_> = (0..64).map(|_| random_graph(&mut rng)).collect();
    c.bench_function("extract_queries/64_graphs", |b| {
        b.iter(|| {
            for g in &graphs {
                black_box(extract_queries(black_box(g)));
            }
        })
    });
}

fn bench_ranker(c: &mut Criterion) {
    let mut group = c.benchmark_group("ranker");
    for dim in [16, 64, 256] {
        let samples = separable_training_set(dim, 64, 0.15, 1);
        let model = RankerModel::new(dim, dim, 1).unwrap();
        group.bench_with_input(BenchmarkId::new("support", dim), &dim, |b, _| {
            b.iter(|| model.support(black_box(&samples[0].triple)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("loss_and_gradient", dim), &dim, |b, _| {
            b.iter(|| loss_and_gradient(&model, black_box(&samples[0])).unwrap())
        });
    }
    let samples = separable_training_set(16, 400, 0.15, 7);
    let hp = Hyperparams {
        epochs: 1,
        ..Hyperparams::default()
    };
    group.bench_function("epoch/d16_400_samples", |b| {
        b.iter_batched(
            || RankerModel::new(16, 16, 7).unwrap(),
            |m| train(&samples, m, &hp).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_auc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let preds: Vec<LabeledPrediction> = (0..10_000)
        .map(|i| LabeledPrediction {
            true_label: if i % 2 == 0 { PairLabel::Real } else { PairLabel::Fake },
            predicted_label: PairLabel::Real,
            score: (rng.gen_range(0..1000) as f64) / 1000.0,
        })
        .collect();
    c.bench_function("auc_roc/10k", |b| b.iter(|| auc_roc(black_box(&preds)).unwrap()));
}

criterion_group!(benches, bench_extraction, bench_ranker, bench_auc);
criterion_main!(benches);
