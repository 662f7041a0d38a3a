use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use striplearn::extraction::extract_from_model;
use striplearn::learner::{learn, train_classifiers, LearnConfig};
use striplearn::perceptron::{KernelSpec, TrainConfig};
use striplearn_bench::Fixture;

fn trace_generation(c: &mut Criterion) {
    let bw = Fixture::blocksworld();
    let zt = Fixture::zenotravel();
    let mut g = c.benchmark_group("generate");
    g.sample_size(10);
    g.bench_function("blocksworld/5000", |b| b.iter(|| bw.trace(5000, 0.25, 0.05, 1)));
    g.bench_function("zenotravel/5000", |b| b.iter(|| zt.trace(5000, 0.25, 0.05, 1)));
    g.finish();
}

fn training(c: &mut Criterion) {
    let bw = Fixture::blocksworld();
    let trace = bw.trace(5000, 0.25, 0.05, 2);
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    for kernel in [KernelSpec::Linear, KernelSpec::Dnf, KernelSpec::KDnf(3)] {
        g.bench_with_input(BenchmarkId::from_parameter(kernel), &kernel, |b, &k| {
            b.iter(|| train_classifiers(&bw.domain, &trace, k, TrainConfig::default()))
        });
    }
    g.finish();
}

fn extraction(c: &mut Criterion) {
    let bw = Fixture::blocksworld();
    let trace = bw.trace(5000, 0.25, 0.05, 3);
    let cfg = LearnConfig::default();
    let trained = train_classifiers(&bw.domain, &trace, cfg.kernel, cfg.train);
    let stack = &trained["stack"];
    let sets: Vec<_> = stack
        .models
        .iter()
        .map(|(&bit, m)| (m, stack.training_set(bit)))
        .collect();
    c.bench_function("extract/stack", |b| {
        b.iter(|| {
            sets.iter()
                .map(|(m, data)| extract_from_model(m, data, cfg.extract).len())
                .sum::<usize>()
        })
    });
}

fn end_to_end(c: &mut Criterion) {
    let zt = Fixture::zenotravel();
    let trace = zt.trace(5000, 0.1, 0.05, 4);
    let mut g = c.benchmark_group("learn");
    g.sample_size(10);
    g.bench_function("zenotravel/5000", |b| b.iter(|| learn(&zt.domain, &trace, &LearnConfig::default())));
    g.finish();
}

criterion_group!(benches, trace_generation, training, extraction, end_to_end);
criterion_main!(benches);
