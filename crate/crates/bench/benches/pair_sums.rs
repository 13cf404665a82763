use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use quadest_bench::uniform_sample;
use quadest_core::kernels::{fourier_kernel, haar_uniform, squared_norm, wavelet_kernel, WaveletFamily};
use quadest_core::ustat::{pair_sum, pair_sum_brute};
use quadest_core::{Domain, MeasureModel};

fn haar(c: &mut Criterion) {
    let mut g = c.benchmark_group("haar_pair_sum");
    let kern = haar_uniform(10);
    for n in [256usize, 1024, 4096] {
        let s = uniform_sample(n, 0.0, 1.0, 1);
        g.bench_with_input(BenchmarkId::new("cells", n), &s, |b, s| {
            b.iter(|| pair_sum(&kern, black_box(s)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("brute", n), &s, |b, s| {
            b.iter(|| pair_sum_brute(&kern, black_box(s)).unwrap())
        });
    }
    g.finish();
}

fn fourier(c: &mut Criterion) {
    let mut g = c.benchmark_group("fourier_pair_sum");
    let dom = Domain::circle();
    let kern = fourier_kernel(64, dom).unwrap();
    for n in [256usize, 1024] {
        let s = uniform_sample(n, dom.lo, dom.hi, 2);
        g.bench_with_input(BenchmarkId::new("harmonics", n), &s, |b, s| {
            b.iter(|| pair_sum(&kern, black_box(s)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("brute", n), &s, |b, s| {
            b.iter(|| pair_sum_brute(&kern, black_box(s)).unwrap())
        });
    }
    g.finish();
}

fn wavelet_norm(c: &mut Criterion) {
    let mut g = c.benchmark_group("wavelet_squared_norm");
    g.sample_size(10);
    for level in [3u32, 6] {
        let kern = wavelet_kernel(level, 1, WaveletFamily::Daubechies4).unwrap();
        let grid = MeasureModel::uniform(Domain::UNIT, 1 << (level + 6)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, _| {
            b.iter(|| squared_norm(&kern, &grid).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, haar, fourier, wavelet_norm);
criterion_main!(benches);
