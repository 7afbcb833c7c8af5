use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;

use dftbench_bench::BenchWorld;
use dftbench_core::attack::{perturb, AttackMethod};
use dftbench_core::decoding::{generate_ids, stream_rng, top_k_filter, top_p_filter};
use dftbench_core::evalkit::auc;
use dftbench_core::fixture::Fixture;
use dftbench_core::gltr::{document_features, train};
use dftbench_core::{AttackConfig, LanguageModel, ScoringMode, TrainingGrid};

fn scoring(c: &mut Criterion) {
    let w = BenchWorld::new(20, 200).unwrap();
    let doc = &w.docs[0];
    c.bench_function("gltr_features_causal_200", |b| {
        b.iter(|| document_features(&w.lm, &w.tokenizer, black_box(doc), 512, ScoringMode::Causal).unwrap())
    });
    c.bench_function("gltr_features_masked_200", |b| {
        b.iter(|| document_features(&w.lm, &w.tokenizer, black_box(doc), 512, ScoringMode::Masked).unwrap())
    });
    c.bench_function("train_grid_40", |b| {
        b.iter(|| train(black_box(&w.features), &w.labels, &TrainingGrid::default(), 0).unwrap())
    });
}

fn decoding(c: &mut Criterion) {
    let w = BenchWorld::new(1, 10).unwrap();
    let dist = w.lm.next_token_distribution(&[]).unwrap();
    c.bench_function("top_k_40", |b| b.iter(|| top_k_filter(black_box(&dist), 40)));
    c.bench_function("top_p_0.9", |b| b.iter(|| top_p_filter(black_box(&dist), 0.9)));
    let mut rng = stream_rng(0, 0);
    c.bench_function("generate_80", |b| {
        b.iter(|| {
            generate_ids(&w.lm, &[], 80, &Fixture::default_decoding(0), 0).unwrap()
        })
    });
    let scores: Vec<f64> = (0..2000).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels: Vec<bool> = (0..2000).map(|i| i % 3 == 0).collect();
    c.bench_function("auc_2000", |b| b.iter(|| auc(black_box(&scores), &labels).unwrap()));
}

fn attacks(c: &mut Criterion) {
    let w = BenchWorld::new(4, 80).unwrap();
    let ctx = w.attack_context().unwrap();
    let doc = w.synthetic().next().unwrap().clone();
    let mut group = c.benchmark_group("attack_80_tokens");
    group.sample_size(20);
    for method in [AttackMethod::Dftfooler, AttackMethod::Random] {
        group.bench_function(method.to_string(), |b| {
            b.iter(|| perturb(method, black_box(&doc), &ctx, &AttackConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scoring, decoding, attacks);
criterion_main!(benches);
