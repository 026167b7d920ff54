use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::SeedableRng;
use sa_seu_bench::Fixture;
use sa_seu_core::fault::{sample_fault, Utilisation};
use sa_seu_core::pipeline::run_iteration;
use sa_seu_core::quant::round_shift_clip;
use sa_seu_core::{build_registry, ShiftAmount};

const SIZES: [usize; 3] = [2, 4, 8];

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_iteration");
    for n in SIZES {
        let fx = Fixture::new(n, n, 1);
        let stim = fx.stimulus(Utilisation::Isolated, 0);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{n}x{n}")),
            &stim,
            |b, s| b.iter(|| run_iteration(&fx.config, &s.tile, s.acts()).unwrap()),
        );
    }
    group.finish();
}

fn injection(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_with_fault");
    for mode in [Utilisation::Isolated, Utilisation::Streaming] {
        for n in SIZES {
            let fx = Fixture::new(n, n, 1);
            let registry = build_registry(n, n).unwrap();
            let stim = fx.stimulus(mode, 0);
            let mut ex = fx.executor(mode);
            let mut rng = StdRng::seed_from_u64(3);
            group.bench_function(
                BenchmarkId::new(format!("{mode:?}"), format!("{n}x{n}")),
                |b| {
                    b.iter(|| {
                        let spec = sample_fault(&registry, ex.window(), &mut rng);
                        ex.run_with_fault(&stim, spec).unwrap()
                    })
                },
            );
        }
    }
    group.finish();
}

fn requantize(c: &mut Criterion) {
    let shift = ShiftAmount::new(7).unwrap();
    let accs: Vec<i32> = (0..4096).map(|i| i * 7919 - 16_000_000).collect();
    c.bench_function("round_shift_clip/4096", |b| {
        b.iter(|| {
            accs.iter()
                .map(|&a| round_shift_clip(black_box(a), shift) as i32)
                .sum::<i32>()
        })
    });
}

criterion_group!(benches, iteration, injection, requantize);
criterion_main!(benches);
