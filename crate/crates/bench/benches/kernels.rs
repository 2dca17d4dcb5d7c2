use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use vpr_bench::{cosine_matrix, dataset};
use vpr_core::metrics::{make_thresholds, sweep};
use vpr_core::similarity::{build_matrix, seq_postprocess, SeqPostConfig};
use vpr_core::{Measure, Protocol};

fn similarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_matrix");
    group.sample_size(10);
    for places in [250, 500, 1000] {
        let ds = dataset(places, 128);
        for measure in [Measure::Cosine, Measure::NegEuclidean] {
            group.bench_with_input(BenchmarkId::new(measure.as_str(), places), &ds, |b, ds| {
                b.iter(|| build_matrix(black_box(&ds.db), black_box(&ds.q), measure).unwrap())
            });
        }
    }
    group.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    let ds = dataset(1000, 128);
    let s = cosine_matrix(&ds);
    let thresholds = make_thresholds(&s, 100).unwrap();
    for protocol in [Protocol::AllMatchings, Protocol::SingleBest] {
        group.bench_function(protocol.as_str(), |b| {
            b.iter(|| sweep(black_box(&s), &ds.gt, &thresholds, protocol).unwrap())
        });
    }
    group.finish();
}

fn sequences(c: &mut Criterion) {
    let mut group = c.benchmark_group("seq_postprocess");
    group.sample_size(10);
    let s = cosine_matrix(&dataset(500, 64));
    for window in [5, 11, 21] {
        let cfg = SeqPostConfig {
            window,
            ..SeqPostConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(window), &cfg, |b, cfg| {
            b.iter(|| seq_postprocess(black_box(&s), cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, similarity, sweeps, sequences);
criterion_main!(benches);
