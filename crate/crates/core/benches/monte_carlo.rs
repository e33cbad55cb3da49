use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tcsde::convergence::{strong_error, StrongErrorConfig};
use tcsde::models::{builtin_linear, CoefficientModel, ParametricModel};
use tcsde::noise::{JumpMeasureSpec, NoisePanel};
use tcsde::par::{map_chunks_parallel, map_chunks_sequential, with_workers, Moments, CHUNK};
use tcsde::rng::{derive, Label};
use tcsde::schemes::{st_path, ThetaConfig};
use tcsde::subordinator::{generate_path_with, StableSpec, DEFAULT_STEP_CAP};

fn model() -> ParametricModel {
    builtin_linear(-1.0, 0.5, 0.2, JumpMeasureSpec::uniform(1.0, 0.5, 1.0).unwrap(), 1.0).unwrap()
}

fn final_moments(m: &ParametricModel, cfg: &ThetaConfig, range: std::ops::Range<usize>) -> Moments {
    let mut acc = Moments::default();
    for i in range {
        let spec = StableSpec::new(0.8, cfg.delta, 1.0).unwrap();
        let sub = generate_path_with(spec, &mut derive(7, i as u64, Label::Stable), DEFAULT_STEP_CAP).unwrap();
        let noise = NoisePanel::generate(sub.n_steps(), cfg.delta, m.jump_measure(), 7, i as u64).unwrap();
        acc.push(st_path(m, &sub, &noise, cfg).unwrap().final_value());
    }
    acc
}

fn path_batches(c: &mut Criterion) {
    let m = model();
    let cfg = ThetaConfig::new(1.0, 2f64.powi(-8)).unwrap();
    let mut group = c.benchmark_group("st_paths");
    group.sample_size(10);
    for n in [256usize, 2048] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| black_box(map_chunks_sequential(n, CHUNK, |r| final_moments(&m, &cfg, r))))
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| black_box(map_chunks_parallel(n, CHUNK, |r| final_moments(&m, &cfg, r))))
        });
    }
    group.finish();
}

fn strong_error_ladder(c: &mut Criterion) {
    let m = model();
    let cfg = StrongErrorConfig::new(0.8, 1.0, 1.0, 512, 3);
    let mut group = c.benchmark_group("strong_error");
    group.sample_size(10);
    for workers in [1usize, 0] {
        let label = if workers == 1 { "one_worker" } else { "all_workers" };
        group.bench_function(label, |b| b.iter(|| black_box(with_workers(workers, || strong_error(&m, &cfg).unwrap()))));
    }
    group.finish();
}

criterion_group!(benches, path_batches, strong_error_ladder);
criterion_main!(benches);
