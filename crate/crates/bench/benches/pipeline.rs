use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use specdet_bench::{cps_dataset, token_corpus, trained};
use specdet_core::classifiers::ClassifierKind;
use specdet_core::embedding::{build_vocab, encode_sequence, train_skipgram, EmbeddingConfig};
use specdet_core::eval::{kfold, roc, KFoldSpec};
use specdet_core::train;

fn classifiers(c: &mut Criterion) {
    let data = cps_dataset(800, 200, 1);
    let mut train_group = c.benchmark_group("train_1000");
    train_group.sample_size(10);
    for kind in [ClassifierKind::Nb, ClassifierKind::Lr, ClassifierKind::Svc, ClassifierKind::Rf] {
        let config = specdet_core::TrainConfig::new(0).with_standardize(true);
        train_group.bench_function(kind.as_str(), |b| b.iter(|| train(kind, black_box(&data), &config).unwrap()));
    }
    train_group.finish();

    let mut predict_group = c.benchmark_group("predict_one");
    for kind in [ClassifierKind::Nb, ClassifierKind::Lr, ClassifierKind::Svc, ClassifierKind::Rf] {
        let model = trained(kind, &data);
        let input = data.input(0);
        predict_group.bench_function(kind.as_str(), |b| b.iter(|| model.predict_score(black_box(input)).unwrap()));
    }
    predict_group.finish();
}

fn evaluation(c: &mut Criterion) {
    let n = 10_000;
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    c.bench_function("roc_10k", |b| b.iter(|| roc(black_box(&labels), black_box(&scores)).unwrap()));
    c.bench_function("kfold_10_of_5000", |b| b.iter(|| kfold(black_box(5000), &KFoldSpec::new(10, 3)).unwrap()));
}

fn embedding(c: &mut Criterion) {
    let corpus = token_corpus(40, 200);
    let vocab = build_vocab(&corpus, 1).unwrap();
    let config = EmbeddingConfig {
        epochs: 1,
        ..EmbeddingConfig::default()
    };
    let mut group = c.benchmark_group("embedding");
    group.sample_size(10);
    group.bench_function("skipgram_epoch_8k_tokens", |b| {
        b.iter(|| train_skipgram(black_box(&corpus), &vocab, &config).unwrap())
    });
    let matrix = train_skipgram(&corpus, &vocab, &config).unwrap().embedding;
    let tokens = &corpus.records()[0].tokens;
    group.bench_function("encode_256x32", |b| b.iter(|| encode_sequence(black_box(tokens), &matrix)));
    group.finish();
}

criterion_group!(benches, classifiers, evaluation, embedding);
criterion_main!(benches);
