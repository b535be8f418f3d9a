//! Whole-loop cost of the offline and online solvers on small synthetic
//! instances, separating the first-order baseline from the smoothed
//! two-point route.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use subzero_core::lovasz::{ExactExtension, ExtensionSubgradient};
use subzero_core::online::{solve_online, OnlineOptions, OnlineProblem};
use subzero_core::optim::{solve_offline, Descent, SolveOptions};
use subzero_core::smoothing::OracleVariant;
use subzero_core::{CubePoint, SetFunction};

fn path_cut(n: usize) -> SetFunction {
    let edges: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    SetFunction::graph_cut(n, &edges).unwrap()
}

/// Modular losses whose favoured element rotates every round.
fn rotating_sequence(n: usize, rounds: usize) -> OnlineProblem {
    OnlineProblem::generate(rounds, |k, half| {
        let hot = (2 * k + usize::from(half)) % n;
        let weights: Vec<f64> = (0..n).map(|j| if j == hot { -2.0 } else { 1.0 }).collect();
        SetFunction::modular(&weights)
    })
    .unwrap()
}

fn bench_solvers(c: &mut Criterion) {
    const N: usize = 8;
    const ITERS: usize = 50;

    c.bench_function("offline-subgradient-n8-50it", |b| {
        b.iter(|| {
            let f = path_cut(N);
            let oracle = ExtensionSubgradient::new(&f);
            let descent = Descent::Subgradient { oracle: &oracle };
            let opts = SolveOptions::new(0.05, ITERS, 0, CubePoint::uniform_center(N));
            black_box(solve_offline(&f, &descent, &opts).unwrap())
        })
    });

    c.bench_function("offline-zero-order-n8-50it", |b| {
        b.iter(|| {
            let f = path_cut(N);
            let drive = ExactExtension::new(&f, true);
            let descent = Descent::ZeroOrder {
                objective: &drive,
                variant: OracleVariant::Forward,
                mu: 1e-4,
                batch: 1,
            };
            let opts = SolveOptions::new(0.05, ITERS, 0, CubePoint::uniform_center(N));
            black_box(solve_offline(&f, &descent, &opts).unwrap())
        })
    });

    c.bench_function("online-split-n6-50rounds", |b| {
        let problem = rotating_sequence(6, 50);
        b.iter(|| {
            let opts = OnlineOptions {
                step: 0.05,
                mu: 1e-4,
                variant: OracleVariant::OnlineSplit,
                batch: 1,
                seed: 0,
                init: CubePoint::uniform_center(6),
                record_drift: false,
            };
            black_box(solve_online(&problem, &opts).unwrap())
        })
    });
}

criterion_group!(solvers, bench_solvers);
criterion_main!(solvers);
