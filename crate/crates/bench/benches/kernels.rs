use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use robustlearn::adversary::{corrupt_full, AdversarySpec, Strategy};
use robustlearn::gaussian::{filter_mean_step, find_max_poly};
use robustlearn::linalg::{covariance, mean, top_eigenpair_abs};
use robustlearn::models::{sample_model, BinaryProductModel, GaussianModel, Model};
use robustlearn::tournament::{tournament, TournamentOptions};
use robustlearn::{FilterConfig, SampleSet, Seed};

fn attacked_gaussian(d: usize, n: usize, eps: f64, strategy: Strategy) -> SampleSet {
    let model = Model::Gaussian(GaussianModel::standard(d));
    let clean = sample_model(&model, n, Seed::new(1)).unwrap();
    corrupt_full(&clean, eps, &AdversarySpec::full(strategy), Seed::new(2))
        .unwrap()
        .0
}

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("top_eigenpair_abs");
    for d in [64, 256] {
        let s = attacked_gaussian(d, 10 * d, 0.1, Strategy::MeanShift);
        let cov = covariance(&s, &mean(&s));
        g.bench_with_input(BenchmarkId::from_parameter(d), &cov, |b, m: &DMatrix<f64>| {
            b.iter(|| top_eigenpair_abs(m, 1e-10).unwrap())
        });
    }
    g.finish();
}

fn mean_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("filter_mean_step");
    g.sample_size(10);
    for d in [16, 64] {
        let eps = 0.1;
        let s = attacked_gaussian(d, (10.0 * d as f64 / (eps * eps)) as usize, eps, Strategy::MeanShift);
        let cfg = FilterConfig::new(eps);
        g.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| {
            b.iter(|| filter_mean_step(s, &cfg).unwrap())
        });
    }
    g.finish();
}

fn max_poly(c: &mut Criterion) {
    let mut g = c.benchmark_group("find_max_poly");
    g.sample_size(10);
    for d in [8, 16] {
        let eps = 0.05;
        let s = attacked_gaussian(d, 20_000, eps, Strategy::LineCluster);
        let cfg = FilterConfig::new(eps);
        let id = DMatrix::identity(d, d);
        g.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| {
            b.iter(|| find_max_poly(s, &id, &cfg).unwrap())
        });
    }
    g.finish();
}

fn select(c: &mut Criterion) {
    let mut g = c.benchmark_group("tournament");
    g.sample_size(10);
    let d = 8;
    let truth = Model::BinaryProduct(BinaryProductModel::new(DVector::from_element(d, 0.4)).unwrap());
    let samples = sample_model(&truth, 20_000, Seed::new(3)).unwrap();
    for k in [8, 32] {
        let pool: Vec<Model> = (0..k)
            .map(|i| {
                let p = 0.2 + 0.6 * i as f64 / k as f64;
                Model::BinaryProduct(BinaryProductModel::new(DVector::from_element(d, p)).unwrap())
            })
            .collect();
        let opts = TournamentOptions::new(0.05, 0.05, Seed::new(4));
        g.bench_with_input(BenchmarkId::from_parameter(k), &pool, |b, pool| {
            b.iter(|| tournament(pool, &samples, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, eigen, mean_step, max_poly, select);
criterion_main!(benches);
