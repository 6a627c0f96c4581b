use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mol_bench::clustered;
use mol_core::kernel::dot;
use mol_core::{approx_topk, approx_topk_batch, brute_force_topk, exact_topk, ApproxParams, Method};
use std::hint::black_box;

fn bench_kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("dot");
    for dim in [8usize, 64, 256] {
        let a: Vec<f64> = (0..dim).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..dim).map(|i| (i as f64).cos()).collect();
        group.throughput(Throughput::Elements(dim as u64));
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |bench, _| {
            bench.iter(|| dot(black_box(&a), black_box(&b)))
        });
    }
    group.finish();
}

fn bench_single_query(c: &mut Criterion) {
    let w = clustered(50_000, 4, 4, 4, 32);
    let q = &w.queries[0];
    let k = 100;
    let mut group = c.benchmark_group("top100_50k_items");
    group.sample_size(20);
    group.bench_function("brute_force", |b| b.iter(|| brute_force_topk(q, &w.index, &w.gate, k).unwrap()));
    group.bench_function("exact", |b| b.iter(|| exact_topk(q, &w.index, &w.gate, k).unwrap()));
    for method in [
        Method::PerEmbedding { n: 50 },
        Method::Average { n: 1000 },
        Method::Combined { n1: 50, n2: 500 },
    ] {
        group.bench_function(BenchmarkId::new("approx", method), |b| {
            b.iter(|| approx_topk(q, &w.index, &w.gate, ApproxParams::new(method, k)).unwrap())
        });
    }
    group.finish();
}

fn bench_average_scan_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("average_batch32");
    group.sample_size(10);
    for n_items in [10_000usize, 100_000] {
        let w = clustered(n_items, 32, 2, 8, 8);
        group.throughput(Throughput::Elements(n_items as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n_items), &n_items, |b, _| {
            let params = ApproxParams::new(Method::Average { n: 1000 }, 100);
            b.iter(|| approx_topk_batch(&w.queries, &w.index, &w.gate, params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_kernel, bench_single_query, bench_average_scan_scaling);
criterion_main!(benches);
