//! Parallel versus sequential throughput of the data-parallel kernels.
//!
//! `correlate` and `brute_force_hom_sweep` use rayon when the `parallel`
//! feature is on (the default); `correlate_sequential` and a pointwise
//! oracle loop are the single-threaded references. Run with
//! `--no-default-features` to see the sampler on one thread.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rrs_core::correlator::{correlate, correlate_sequential, Window};
use rrs_core::model::oracle::{brute_force_hom_prob, brute_force_hom_sweep, IntegrationGrid};
use rrs_core::model::{EmitterParams, InterferometerConfig, Polarization, ScatteringMix};
use rrs_core::simulate::{sample_hom_coincidences, PairSamplerConfig, StreamMetadata, TimeTagStream};

fn uniform_stream(seed: u64, channel: u8, n: usize, duration: i64) -> TimeTagStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tags: Vec<i64> = (0..n).map(|_| rng.random_range(0..=duration)).collect();
    tags.sort_unstable();
    tags.dedup();
    TimeTagStream::new(channel, tags, duration, StreamMetadata::default()).unwrap()
}

fn correlation(c: &mut Criterion) {
    let mut group = c.benchmark_group("correlate");
    group.sample_size(10);
    let window = Window::symmetric(100_000);
    for n in [100_000usize, 1_000_000] {
        // 1 MHz per channel
        let duration = n as i64 * 1_000_000;
        let a = uniform_stream(1, 1, n, duration);
        let b = uniform_stream(2, 2, n, duration);
        group.throughput(Throughput::Elements((a.len() + b.len()) as u64));
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |bench, _| {
            bench.iter(|| correlate(black_box(&a), black_box(&b), 100, window).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |bench, _| {
            bench.iter(|| correlate_sequential(black_box(&a), black_box(&b), 100, window).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_sweep");
    group.sample_size(10);
    let params = EmitterParams::new(1.0, 1.8, 1.5);
    let mix = ScatteringMix::new(0.5, 1.8).unwrap();
    let grid = IntegrationGrid::default();
    let taus: Vec<f64> = (0..32).map(|k| 9.0 * k as f64 / 31.0).collect();
    group.throughput(Throughput::Elements(taus.len() as u64));
    group.bench_function("parallel", |bench| {
        bench.iter(|| brute_force_hom_sweep(black_box(&taus), &mix, &params, Polarization::Co, 1.0, &grid).unwrap())
    });
    group.bench_function("sequential", |bench| {
        bench.iter(|| {
            taus.iter()
                .map(|&t| brute_force_hom_prob(black_box(t), &mix, &params, Polarization::Co, 1.0, &grid).unwrap())
                .collect::<Vec<_>>()
        })
    });
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("hom_pair_sampler");
    group.sample_size(10);
    let params = EmitterParams::new(1.0, 1.8, 1.5);
    let mix = ScatteringMix::new(0.5, f64::INFINITY).unwrap();
    let cfg = InterferometerConfig::balanced(12.5, Polarization::Co);
    let s = PairSamplerConfig {
        pair_rate: 1e5,
        singles_rate: 0.0,
        duration: 1e10,
        window: 18.5,
    };
    group.throughput(Throughput::Elements(1_000_000));
    group.bench_function("1e6_pairs", |bench| {
        bench.iter(|| sample_hom_coincidences(&params, &mix, &cfg, black_box(&s), 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, correlation, oracle, sampler);
criterion_main!(benches);
