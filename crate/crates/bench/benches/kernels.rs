use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use velo_attn_bench::{positions, scan_of_size};
use velo_attn_core::sampling::{fps, knn};
use velo_attn_core::{Model, ModelConfig};

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampling");
    for n in [128, 300, 1000] {
        let pts = positions(&scan_of_size(n, 0));
        group.bench_with_input(BenchmarkId::new("fps_half", pts.len()), &pts, |b, pts| {
            b.iter(|| fps(black_box(pts), pts.len().div_ceil(2)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("knn_16", pts.len()), &pts, |b, pts| {
            b.iter(|| knn(black_box(pts), pts, 16).unwrap())
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    group.sample_size(20);
    let scan = scan_of_size(300, 1);
    for (name, cfg) in [("tiny", ModelConfig::tiny()), ("paper", ModelConfig::paper())] {
        let model = Model::<f32>::build(&cfg, 0).unwrap();
        group.bench_function(BenchmarkId::new(name, scan.len()), |b| {
            b.iter(|| model.forward(black_box(&scan)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sampling, forward);
criterion_main!(benches);
