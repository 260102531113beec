use std::hint::black_box;

use carpetq_core::quantizer::{DEFAULT_DEPTH, DEFAULT_FLOOR};
use carpetq_core::{
    build_antichain, draw_cloud, enumerate_lambda_k, lambda_codebook, log_distortion,
    AntichainOptions, Carpet, CarpetSpec, EnumOptions,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn carpet_a() -> Carpet {
    Carpet::new(CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)])).unwrap()
}

fn enumeration(c: &mut Criterion) {
    let a = carpet_a();
    let mut group = c.benchmark_group("enumerate_lambda_k");
    for k in [3, 4, 5] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| enumerate_lambda_k(&a, black_box(k), &EnumOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn antichain(c: &mut Criterion) {
    let a = carpet_a();
    let mut group = c.benchmark_group("build_antichain");
    group.sample_size(10);
    for k in [3, 5] {
        let lk = enumerate_lambda_k(&a, k, &EnumOptions::default()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(k), &lk, |b, lk| {
            b.iter(|| build_antichain(&a, black_box(lk), &AntichainOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn distortion(c: &mut Criterion) {
    let a = carpet_a();
    let cloud = draw_cloud(&a, 50_000, DEFAULT_DEPTH, 1).unwrap();
    let mut group = c.benchmark_group("log_distortion");
    group.sample_size(10);
    for k in [2, 4] {
        let lk = enumerate_lambda_k(&a, k, &EnumOptions::default()).unwrap();
        let book = lambda_codebook(&a, &lk);
        group.bench_with_input(BenchmarkId::from_parameter(book.len()), &book, |b, book| {
            b.iter(|| log_distortion(&cloud, black_box(book), DEFAULT_FLOOR).unwrap())
        });
    }
    group.finish();
    c.bench_function("draw_cloud_50k", |b| {
        b.iter(|| draw_cloud(&a, black_box(50_000), DEFAULT_DEPTH, 1).unwrap())
    });
}

criterion_group!(benches, enumeration, antichain, distortion);
criterion_main!(benches);
