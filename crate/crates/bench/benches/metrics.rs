use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use msafnet_bench::MetricCase;
use msafnet_core::metrics::{auc_judd, auc_shuffled, cc, extract_fixations, kl_divergence, nss, sim, SHUFFLED_SPLITS};

fn metrics(c: &mut Criterion) {
    let case = MetricCase::new(256, 7);
    let (gt, pred, fix, pool) = (&case.truth, &case.prediction, &case.fixations, &case.pool);
    let mut group = c.benchmark_group("metrics_256");
    group.sample_size(20);
    group.bench_function("kldiv", |b| b.iter(|| black_box(kl_divergence(gt, pred))));
    group.bench_function("cc", |b| b.iter(|| black_box(cc(gt, pred))));
    group.bench_function("sim", |b| b.iter(|| black_box(sim(gt, pred))));
    group.bench_function("nss", |b| b.iter(|| black_box(nss(fix, pred))));
    group.bench_function("auc_j", |b| b.iter(|| black_box(auc_judd(fix, pred))));
    group.bench_function("auc_s", |b| b.iter(|| black_box(auc_shuffled(fix, pred, pool, SHUFFLED_SPLITS, 3))));
    group.bench_function("extract_fixations", |b| b.iter(|| black_box(extract_fixations(gt))));
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
