use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use histql_bench::skewed_values;
use histql_core::binning::{eqrb_fit, ewb_fit, lookup_bin};
use std::hint::black_box;

fn fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    for n in [1_000, 100_000] {
        let values = skewed_values(n, 7);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("ewb", n), &values, |b, v| {
            b.iter(|| ewb_fit("x", black_box(v), 60).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("eqrb", n), &values, |b, v| {
            b.iter(|| eqrb_fit("x", black_box(v), 39).unwrap())
        });
    }
    group.finish();
}

fn lookup(c: &mut Criterion) {
    let train = skewed_values(100_000, 1);
    let probes = skewed_values(10_000, 2);
    let mut group = c.benchmark_group("lookup");
    group.throughput(Throughput::Elements(probes.len() as u64));
    for (name, meta) in [
        ("ewb", ewb_fit("x", &train, 60).unwrap().1),
        ("eqrb", eqrb_fit("x", &train, 39).unwrap().1),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| probes.iter().map(|&v| lookup_bin(v, &meta)).sum::<u32>())
        });
    }
    group.finish();
}

criterion_group!(benches, fit, lookup);
criterion_main!(benches);
