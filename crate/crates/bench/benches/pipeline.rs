use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ldpspline::privacy::simulate_release;
use ldpspline::{
    lepski_select, plan_spline_noise, plan_wavelet_noise, release, wavelet_estimate, BSplineBasis, FunctionalSpec,
    LepskiConfig, MultiresolutionLadder,
};
use ldpspline_bench::sine_samples;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn basis(c: &mut Criterion) {
    let mut g = c.benchmark_group("basis");
    for d in [1usize, 3] {
        let b = BSplineBasis::new(8, d).unwrap();
        g.bench_with_input(BenchmarkId::new("local", d), &b, |bench, b| {
            bench.iter(|| {
                let mut s = 0.0;
                for i in 0..1000 {
                    s += b.local(black_box(i as f64 / 1000.0), 1).ders[0][0];
                }
                s
            })
        });
    }
    g.bench_function("ladder_d3_j8", |bench| bench.iter(|| MultiresolutionLadder::new(3, black_box(8)).unwrap()));
    g.finish();
}

fn sanitize(c: &mut Criterion) {
    let samples = sine_samples(1 << 14);
    let mut g = c.benchmark_group("release");
    g.throughput(Throughput::Elements(samples.len() as u64));
    g.sample_size(10);
    let spline = plan_spline_noise(&Arc::new(BSplineBasis::new(6, 3).unwrap()), 1.0).unwrap();
    let ladder = Arc::new(MultiresolutionLadder::new(3, 6).unwrap());
    let wavelet = plan_wavelet_noise(&ladder, 1.0, 2.0).unwrap();
    g.bench_function("spline_records", |b| b.iter(|| release(&samples, &spline, 1, false).unwrap()));
    g.bench_function("wavelet_records", |b| b.iter(|| release(&samples, &wavelet, 1, false).unwrap()));
    g.bench_function("wavelet_simulated", |b| {
        b.iter(|| simulate_release(&samples, &wavelet, &mut ChaCha20Rng::seed_from_u64(1)).unwrap())
    });
    g.finish();
}

fn estimation(c: &mut Criterion) {
    let samples = sine_samples(1 << 14);
    let ladder = Arc::new(MultiresolutionLadder::new(3, 6).unwrap());
    let plan = plan_wavelet_noise(&ladder, 1.0, 2.0).unwrap();
    let bundle = release(&samples, &plan, 3, false).unwrap();
    let mut g = c.benchmark_group("estimation");
    g.bench_function("wavelet_estimate_j5", |b| b.iter(|| wavelet_estimate(&bundle, &ladder, black_box(5)).unwrap()));
    let est = wavelet_estimate(&bundle, &ladder, 5).unwrap();
    for id in ["power:m=0,q=2", "entropy", "fisher", "point:r=1,x0=0.5"] {
        let spec = FunctionalSpec::parse(id).unwrap();
        g.bench_function(BenchmarkId::new("functional", id), |b| b.iter(|| spec.evaluate(&est).unwrap()));
    }
    g.sample_size(10);
    let cfg = LepskiConfig::default();
    g.bench_function("lepski_n2^14", |b| b.iter(|| lepski_select(&bundle, &ladder, 1 << 14, 1.0, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, basis, sanitize, estimation);
criterion_main!(benches);
