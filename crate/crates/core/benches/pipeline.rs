use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use statslice::eval::{evaluate_corpus, generate_corpus, GenParams, HarnessConfig};
use statslice::par::Parallelism;
use statslice::tracing::SamplingMode;

fn bench_corpus(c: &mut Criterion) {
    let mut group = c.benchmark_group("corpus");
    group.sample_size(10);
    for (name, par) in [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Auto)] {
        group.bench_with_input(BenchmarkId::new("generate", name), &par, |b, &par| {
            b.iter(|| generate_corpus(42, 32, &GenParams::default(), par).unwrap())
        });
        let cfg = HarnessConfig {
            n_programs: 16,
            runs_per_program: 20,
            sampling: SamplingMode::Adaptive,
            par,
            ..HarnessConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("evaluate", name), &cfg, |b, cfg| {
            b.iter(|| evaluate_corpus(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_corpus);
criterion_main!(benches);
