//! Sequential vs parallel comparison of the data-parallel hot paths.
//!
//! The "seq" arm pins the rayon pool to a single worker, the "par" arm
//! uses the default pool. Chunked reductions make both arms produce
//! bit-identical numbers, so the comparison is purely about wall time.
//! (Building without the `parallel` feature removes rayon entirely; this
//! suite requires the feature.)

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::hint::black_box;
use trust_core::data::{Column, ColumnSpec, Dataset, FeatureKind, LabeledDataset, Schema};
use trust_core::explainer::{build_core, explain_batch, BuildParams, TrustCore};
use trust_core::mmg::em_fit;
use trust_core::modesearch::{fast_grid_select, SearchZone};

fn synthetic_labeled(n_per_class: usize, noise_cols: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = Normal::new(0.0, 1.0).unwrap();
    let hi = Normal::new(8.0, 1.0).unwrap();
    let noise = Normal::new(0.0, 1.0).unwrap();

    let mut specs = vec![ColumnSpec {
        name: "sep".into(),
        kind: FeatureKind::Quantitative,
    }];
    let mut informative: Vec<f64> = (0..n_per_class).map(|_| lo.sample(&mut rng)).collect();
    informative.extend((0..n_per_class).map(|_| hi.sample(&mut rng)));
    let mut columns = vec![Column::Quantitative(informative)];
    for c in 0..noise_cols {
        specs.push(ColumnSpec {
            name: format!("n{c}"),
            kind: FeatureKind::Quantitative,
        });
        columns.push(Column::Quantitative(
            (0..2 * n_per_class)
                .map(|_| noise.sample(&mut rng))
                .collect(),
        ));
    }
    let labels = std::iter::repeat_n(0, n_per_class)
        .chain(std::iter::repeat_n(1, n_per_class))
        .collect();
    LabeledDataset::new(
        Dataset::new(Schema::new(specs).unwrap(), columns).unwrap(),
        labels,
        Some(2),
    )
    .unwrap()
}

fn pools() -> (rayon::ThreadPool, rayon::ThreadPool) {
    let seq = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let par = rayon::ThreadPoolBuilder::new().build().unwrap();
    (seq, par)
}

fn bench_em_fit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut values: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
    let shifted = Normal::new(6.0, 1.5).unwrap();
    values.extend((0..20_000).map(|_| shifted.sample(&mut rng)));

    let (seq, par) = pools();
    let mut group = c.benchmark_group("em_fit_40k_values");
    group.bench_with_input(BenchmarkId::new("seq", 4), &values, |b, v| {
        b.iter(|| seq.install(|| black_box(em_fit(v, 4, 0).unwrap())))
    });
    group.bench_with_input(BenchmarkId::new("par", 4), &values, |b, v| {
        b.iter(|| par.install(|| black_box(em_fit(v, 4, 0).unwrap())))
    });
    group.finish();
}

fn bench_mode_search(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lo = Normal::new(0.0, 1.0).unwrap();
    let hi = Normal::new(7.0, 1.0).unwrap();
    let mut a: Vec<f64> = (0..4_000).map(|_| lo.sample(&mut rng)).collect();
    a.extend((0..4_000).map(|_| hi.sample(&mut rng)));
    let b_vals: Vec<f64> = (0..8_000).map(|_| lo.sample(&mut rng)).collect();
    let zone = SearchZone::uniform(2, 1, 10, 5);

    let (seq, par) = pools();
    let mut group = c.benchmark_group("fast_mode_search_10x10");
    group.sample_size(10);
    group.bench_function("seq", |bench| {
        bench
            .iter(|| seq.install(|| black_box(fast_grid_select(&[&a, &b_vals], &zone, 0).unwrap())))
    });
    group.bench_function("par", |bench| {
        bench
            .iter(|| par.install(|| black_box(fast_grid_select(&[&a, &b_vals], &zone, 0).unwrap())))
    });
    group.finish();
}

fn build_fixture() -> (TrustCore, LabeledDataset) {
    let train = synthetic_labeled(5_000, 7, 3);
    let params = BuildParams {
        zone: SearchZone::uniform(2, 1, 4, 2),
        ..BuildParams::new(2, 2)
    };
    let core = build_core(&train, &params).unwrap();
    (core, train)
}

fn bench_explain_batch(c: &mut Criterion) {
    let (core, data) = build_fixture();
    let (seq, par) = pools();
    let mut group = c.benchmark_group("explain_batch_10k_samples");
    group.bench_function("seq", |b| {
        b.iter(|| seq.install(|| black_box(explain_batch(&core, &data.data, None).unwrap())))
    });
    group.bench_function("par", |b| {
        b.iter(|| par.install(|| black_box(explain_batch(&core, &data.data, None).unwrap())))
    });
    group.finish();
}

fn bench_build_core(c: &mut Criterion) {
    let train = synthetic_labeled(2_500, 7, 4);
    let params = BuildParams {
        zone: SearchZone::uniform(2, 1, 4, 2),
        ..BuildParams::new(2, 2)
    };
    let (seq, par) = pools();
    let mut group = c.benchmark_group("build_core_5k_rows");
    group.sample_size(10);
    group.bench_function("seq", |b| {
        b.iter(|| seq.install(|| black_box(build_core(&train, &params).unwrap())))
    });
    group.bench_function("par", |b| {
        b.iter(|| par.install(|| black_box(build_core(&train, &params).unwrap())))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_em_fit,
    bench_mode_search,
    bench_explain_batch,
    bench_build_core
);
criterion_main!(benches);
