use std::hint::black_box;

use cluster_ldp::sim::{simulate, simulate_sequential, Diagnostics, ProcessSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn sticky() -> ProcessSpec {
    let mut weights = vec![0.1; 10];
    weights[9] = 0.1;
    ProcessSpec::StickyMarkov { weights, rho: 0.5 }
}

fn bench_simulate(c: &mut Criterion) {
    let spec = sticky();
    let mut group = c.benchmark_group("simulate");
    for &(n, count) in &[(500usize, 2_000usize), (10_000, 200)] {
        group.throughput(Throughput::Elements((n * count) as u64));
        let id = format!("{n}x{count}");
        group.bench_with_input(
            BenchmarkId::new("sequential", &id),
            &(n, count),
            |b, &(n, count)| b.iter(|| simulate_sequential(black_box(&spec), n, count, 1).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("parallel", &id),
            &(n, count),
            |b, &(n, count)| b.iter(|| simulate(black_box(&spec), n, count, 1).unwrap()),
        );
    }
    group.finish();
}

fn bench_diagnostics(c: &mut Criterion) {
    let batch = simulate(&sticky(), 10_000, 200, 1).unwrap();
    c.bench_function("diagnostics/10000x200", |b| {
        b.iter(|| {
            let mut d = Diagnostics::new(10_000, 1, vec![0.1, 0.2]).unwrap();
            d.add_batch(black_box(&batch)).unwrap();
            d
        })
    });
}

criterion_group!(benches, bench_simulate, bench_diagnostics);
criterion_main!(benches);
