use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mrscope_core::metrics::{completion_time, extract_all, normalize_target, HistoryConfig, COMPLETION_FIELDS};
use mrscope_core::models::train;
use mrscope_core::stats::{
    cliffs_delta, correlation_filter, kendall_tau_b, redundancy_filter, scott_knott_esd, spearman,
    wilcoxon_signed_rank, ScottKnottConfig,
};
use mrscope_core::synth::{impact_corpus, injected_corpus};
use mrscope_core::taxonomy::{detect_all, RuleSet};
use mrscope_core::{EnsembleKind, EnsembleSpec, FeatureMatrix, RuleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vectors(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let y = x.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    (x, y)
}

fn completion_matrix(n_regular: usize, n_deviation: usize) -> (FeatureMatrix, Vec<f64>) {
    let corpus = impact_corpus(n_regular, n_deviation, 1).unwrap();
    let merged: Vec<_> = corpus.records.iter().filter(|r| r.is_merged()).collect();
    let features = extract_all(&corpus, &merged, &HistoryConfig::default());
    let hours: Vec<f64> = merged.iter().map(|r| completion_time(r).unwrap()).collect();
    let (target, _) = normalize_target(&hours).unwrap();
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.values().to_vec()).collect();
    let names = COMPLETION_FIELDS.iter().map(|s| s.to_string()).collect();
    let ids = merged.iter().map(|r| r.id).collect();
    let x = FeatureMatrix::from_rows(names, ids, &rows).unwrap();
    (x, target.iter().map(|t| t.normalized).collect())
}

fn stats(c: &mut Criterion) {
    let (x, y) = vectors(1000, 1);
    c.bench_function("spearman_1000", |b| b.iter(|| spearman(black_box(&x), black_box(&y)).unwrap()));
    c.bench_function("kendall_tau_b_1000", |b| b.iter(|| kendall_tau_b(black_box(&x), black_box(&y)).unwrap()));
    c.bench_function("cliffs_delta_1000", |b| b.iter(|| cliffs_delta(black_box(&x), black_box(&y)).unwrap()));
    let (a, d) = vectors(100, 2);
    c.bench_function("wilcoxon_100", |b| b.iter(|| wilcoxon_signed_rank(black_box(&a), black_box(&d)).unwrap()));
    let (a, d) = vectors(20, 3);
    c.bench_function("wilcoxon_exact_20", |b| b.iter(|| wilcoxon_signed_rank(black_box(&a), black_box(&d)).unwrap()));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let groups: Vec<(String, Vec<f64>)> = (0..26)
        .map(|i| (format!("f{i}"), (0..100).map(|_| (i % 6) as f64 * 0.1 + rng.random::<f64>() * 0.2).collect()))
        .collect();
    c.bench_function("scott_knott_26x100", |b| {
        b.iter(|| scott_knott_esd(black_box(&groups), &ScottKnottConfig::default()).unwrap())
    });
}

fn collinearity(c: &mut Criterion) {
    let (x, _) = completion_matrix(800, 200);
    c.bench_function("correlation_filter_26", |b| b.iter(|| correlation_filter(black_box(&x), 0.7).unwrap()));
    let kept = x.select_columns(&correlation_filter(&x, 0.7).unwrap().kept).unwrap();
    c.bench_function("redundancy_filter", |b| b.iter(|| redundancy_filter(black_box(&kept), 0.9).unwrap()));
}

fn trees(c: &mut Criterion) {
    let (x, y) = completion_matrix(800, 200);
    let mut group = c.benchmark_group("train_1000x26_50_trees");
    group.sample_size(10);
    for kind in EnsembleKind::ALL {
        let spec = EnsembleSpec { n_trees: 50, ..EnsembleSpec::new(kind, 9) };
        group.bench_function(kind.short(), |b| b.iter(|| train(black_box(&spec), &x, &y).unwrap()));
    }
    group.finish();
}

fn detection(c: &mut Criterion) {
    let (corpus, _) = injected_corpus(700, 50, 5).unwrap();
    let rules = RuleSet::compile(&RuleConfig::default()).unwrap();
    c.bench_function("detect_1050", |b| b.iter(|| detect_all(black_box(&corpus), &rules)));
    c.bench_function("compile_rules", |b| {
        b.iter_batched(RuleConfig::default, |cfg| RuleSet::compile(&cfg).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, stats, collinearity, trees, detection);
criterion_main!(benches);
