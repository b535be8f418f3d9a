//! Per-call cost of the extension backends on the 50-point clustering
//! objective: one exact chain evaluation, one subgradient, one sampled
//! estimate, one surrogate probe, plus kernel and low-rank construction.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subzero_core::clustering::{
    label_priors, mutual_info_cost, nystrom_approx, rbf_kernel, taylor_mutual_info, two_moons,
};
use subzero_core::lovasz::{
    ExactExtension, ExtensionSubgradient, StochasticExtension, SubgradientOracle,
};
use subzero_core::smoothing::Objective;
use subzero_core::SetFunction;

const P: usize = 50;
const SIGMA_SQ: f64 = 0.05;

fn clustering_cost() -> (SetFunction, Vec<f64>) {
    let cloud = two_moons(P, 0.05, 8, 11).unwrap();
    let kernel = rbf_kernel(&cloud, SIGMA_SQ).unwrap();
    let eta = label_priors(&cloud);
    let f = mutual_info_cost(Arc::new(kernel), eta).unwrap();
    // A fixed interior point with distinct coordinates, so every call
    // walks the same full sorting chain.
    let x: Vec<f64> = (0..P).map(|i| 0.05 + 0.9 * (i as f64) / (P as f64)).collect();
    (f, x)
}

fn bench_backends(c: &mut Criterion) {
    let (f, x) = clustering_cost();

    c.bench_function("exact-extension-p50", |b| {
        let exact = ExactExtension::new(&f, false);
        b.iter(|| exact.eval(black_box(&x)).unwrap())
    });

    c.bench_function("extension-subgradient-p50", |b| {
        let oracle = ExtensionSubgradient::new(&f);
        b.iter(|| oracle.value_and_subgradient(black_box(&x)).unwrap())
    });

    c.bench_function("stochastic-extension-p50-rho25", |b| {
        let est = StochasticExtension::new(&f, 0.25, ChaCha8Rng::seed_from_u64(0)).unwrap();
        b.iter(|| est.eval(black_box(&x)).unwrap())
    });

    let cloud = two_moons(P, 0.05, 8, 11).unwrap();
    let kernel = rbf_kernel(&cloud, SIGMA_SQ).unwrap();
    let eta = label_priors(&cloud);

    c.bench_function("taylor-surrogate-p50", |b| {
        let surrogate = taylor_mutual_info(&kernel, &eta).unwrap();
        b.iter(|| surrogate.eval(black_box(&x)).unwrap())
    });

    c.bench_function("rbf-kernel-build-p50", |b| {
        b.iter(|| rbf_kernel(black_box(&cloud), SIGMA_SQ).unwrap())
    });

    c.bench_function("nystrom-build-p50-m12", |b| {
        b.iter(|| nystrom_approx(black_box(&kernel), 12, 3).unwrap())
    });
}

criterion_group!(backends, bench_backends);
criterion_main!(backends);
