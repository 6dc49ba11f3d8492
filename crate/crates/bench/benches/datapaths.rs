use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use wbsrc_bench::{random_frames, random_i16};
use wbsrc_core::{
    design_halfband, quantize_coeffs, run_parallel_cic, run_serial_cic, run_src, CicConfig,
    HalfbandDecimator, HalfbandSpec, NumericKind, SrcConfig,
};

const SAMPLES: usize = 1 << 18;

fn cic(c: &mut Criterion) {
    let cfg = CicConfig::standard(5, 20).unwrap();
    let serial = random_i16(SAMPLES, 1);
    let mut g = c.benchmark_group("cic");
    g.throughput(Throughput::Elements(SAMPLES as u64));
    g.bench_function("serial", |b| {
        b.iter(|| run_serial_cic(black_box(&serial), &cfg).unwrap())
    });
    for lanes in [8usize, 20, 80] {
        let frames = random_frames(SAMPLES, lanes, 1);
        g.bench_with_input(BenchmarkId::new("parallel", lanes), &frames, |b, f| {
            b.iter(|| run_parallel_cic(black_box(f), &cfg).unwrap())
        });
    }
    g.finish();
}

fn halfband(c: &mut Criterion) {
    let input = random_i16(SAMPLES, 2).samples;
    let mut g = c.benchmark_group("halfband");
    g.throughput(Throughput::Elements(SAMPLES as u64));
    for spec in [HalfbandSpec::order_122(), HalfbandSpec::order_238()] {
        let q = quantize_coeffs(&design_halfband(&spec).unwrap(), 16).unwrap();
        g.bench_with_input(BenchmarkId::new("two-path", spec.order()), &q, |b, q| {
            b.iter(|| {
                let mut dec = HalfbandDecimator::fixed(q, 16).unwrap();
                let mut out = Vec::with_capacity(SAMPLES / 2);
                dec.process(black_box(&input), &mut out);
                out
            })
        });
    }
    g.finish();
}

fn src(c: &mut Criterion) {
    let mut g = c.benchmark_group("src");
    g.sample_size(10);
    g.throughput(Throughput::Elements(SAMPLES as u64));
    for factor in [80u64, 640, 1600] {
        let cfg = SrcConfig::standard(factor, NumericKind::Fixed).unwrap();
        let frames = random_frames(SAMPLES, cfg.lanes, 3);
        g.bench_with_input(BenchmarkId::new("fixed", factor), &frames, |b, f| {
            b.iter(|| run_src(black_box(f), &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, cic, halfband, src);
criterion_main!(benches);
