use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rateloss::finite_blocklength::rate_loss_bound;
use rateloss::source_model::UDensity;
use rateloss::{ols_fit, StreamFamily};
use rateloss_bench::{frontier_fixture, reference, training_set};

fn density_u(c: &mut Criterion) {
    let (source, channel) = reference();
    let pu = UDensity::new(&source, &channel).unwrap();
    let mut g = c.benchmark_group("density_u");
    for u in [-10.0, 1.2, 4.0] {
        g.bench_with_input(BenchmarkId::from_parameter(u), &u, |b, &u| b.iter(|| pu.eval(black_box(u)).unwrap()));
    }
    g.finish();
}

fn ols(c: &mut Criterion) {
    let (source, channel) = reference();
    let mut g = c.benchmark_group("ols_fit");
    for n in [200, 5000] {
        let (u, y) = training_set(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ols_fit(black_box(&u), black_box(&y), &channel, source.k()).unwrap())
        });
    }
    g.finish();
}

fn gaussian_cache(c: &mut Criterion) {
    let fam = StreamFamily::new(1, "bench-cache");
    c.bench_function("gaussian_cache/100000", |b| {
        b.iter(|| rateloss::GaussianCache::draw(black_box(100_000), &fam).unwrap())
    });
}

fn frontier(c: &mut Criterion) {
    let (moments, region) = frontier_fixture(1000, 20_000, 200_000);
    c.bench_function("dispersion_prob/200000", |b| b.iter(|| region.prob(black_box([0.1, 0.2, 30.0]))));
    let mut g = c.benchmark_group("rate_loss_bound");
    g.sample_size(10);
    for eps in [0.1, 0.01] {
        g.bench_with_input(BenchmarkId::from_parameter(eps), &eps, |b, &eps| {
            b.iter(|| rate_loss_bound(&moments, 1000, eps, black_box(18.0), &region).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, density_u, ols, gaussian_cache, frontier);
criterion_main!(benches);
