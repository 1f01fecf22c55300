use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpembed::metric::DEFAULT_ZERO_TOL;
use gpembed::spectral::top_eigenpairs;
use gpembed::{
    affinity, bilipschitz_distortion, diffusion_distance, gp_embedding, make_sketch, normalize_bistochastic,
    pairwise_euclidean, EigenOptions, SinkhornOptions, SketchDistribution,
};
use gpembed_bench::{raw_kernel, symmetric_kernel, torus};

const SIZES: [usize; 2] = [200, 500];

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    for n in SIZES {
        let cloud = torus(n);
        g.bench_with_input(BenchmarkId::new("affinity", n), &cloud, |b, cl| {
            b.iter(|| affinity(black_box(cl), 0.3).unwrap())
        });
        let raw = raw_kernel(n);
        g.bench_with_input(BenchmarkId::new("bistochastic", n), &raw, |b, k| {
            b.iter(|| normalize_bistochastic(black_box(k), SinkhornOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn spectra(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigenpairs");
    g.sample_size(10);
    for n in SIZES {
        let a = symmetric_kernel(n);
        g.bench_with_input(BenchmarkId::new("dense", n), &a, |b, a| {
            b.iter(|| top_eigenpairs(black_box(a), 9, EigenOptions::dense()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("randomized", n), &a, |b, a| {
            b.iter(|| top_eigenpairs(black_box(a), 9, EigenOptions::randomized(8, 4)).unwrap())
        });
    }
    g.finish();
}

fn embedding(c: &mut Criterion) {
    let mut g = c.benchmark_group("gp_embedding");
    for n in SIZES {
        let a = symmetric_kernel(n);
        let sketch = make_sketch(n, 8, SketchDistribution::Gaussian, 3).unwrap();
        for p in [1usize, 10, 256] {
            g.bench_with_input(BenchmarkId::new(format!("n{n}"), p), &p, |b, &p| {
                b.iter(|| gp_embedding(black_box(&a), 8, p, &sketch).unwrap())
            });
        }
    }
    g.finish();
}

fn distortion(c: &mut Criterion) {
    let mut g = c.benchmark_group("distortion");
    g.sample_size(20);
    for n in SIZES {
        let a = symmetric_kernel(n);
        let sketch = make_sketch(n, 8, SketchDistribution::Gaussian, 3).unwrap();
        let emb = pairwise_euclidean(&gp_embedding(&a, 8, 10, &sketch).unwrap().coords);
        g.bench_with_input(BenchmarkId::new("diffusion_distance", n), &a, |b, a| {
            b.iter(|| diffusion_distance(black_box(a), 10).unwrap())
        });
        let reference = diffusion_distance(&a, 10).unwrap();
        g.bench_with_input(BenchmarkId::new("bilipschitz", n), &n, |b, _| {
            b.iter(|| bilipschitz_distortion(black_box(&emb), &reference, DEFAULT_ZERO_TOL).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, spectra, embedding, distortion);
criterion_main!(benches);
