use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use histql_bench::{database, train};
use histql_core::executor;
use histql_core::Binning;

const ROWS: usize = 20_000;

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for binning in [Binning::Ewb, Binning::Eqrb] {
        let mut conn = database("t", ROWS, 3);
        group.bench_function(BenchmarkId::new(binning.as_str(), ROWS), |b| {
            b.iter(|| train(&mut conn, "t", "m", binning, 39))
        });
    }
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict");
    group.sample_size(10);
    for binning in [Binning::Ewb, Binning::Eqrb] {
        let mut conn = database("t", ROWS, 3);
        let model = train(&mut conn, "t", "m", binning, 39);
        group.bench_function(BenchmarkId::new(binning.as_str(), ROWS), |b| {
            b.iter(|| executor::predict(&mut conn, &model, "t").unwrap())
        });
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let mut conn = database("t", ROWS, 3);
    let schema = histql_bench::schema("t");
    c.bench_function("rank", |b| {
        b.iter(|| {
            executor::rank(
                &mut conn,
                &schema,
                "y",
                executor::DEFAULT_RANK_BINNING,
                executor::DEFAULT_RANK_BINS,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, training, prediction, ranking);
criterion_main!(benches);
