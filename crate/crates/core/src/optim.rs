//! Projected descent over the unit cube with zeroth-order or subgradient
//! steps, plus the bookkeeping that makes runs comparable: per-iterate
//! rounding, exact query accounting, and best-of-sequence selection.
//!
//! The solver minimises a continuous drive objective (normally a Lovász
//! extension backend) over [0,1]^n and rounds every iterate to a set with a
//! fresh uniform threshold. Query accounting charges the underlying set
//! oracle: with the exact extension and a batch of t two-point samples each
//! iteration costs 2tn gradient queries plus one rounding query, so
//! consecutive `queries_cumulative` entries differ by exactly 2tn + 1.
//! Surrogate drives that never touch the set oracle show a diff of 1.
//! Diagnostic values in the trace are computed through the quiet path and
//! leave the counter alone.

use std::time::Instant;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::lovasz::{self, CubePoint, SubgradientOracle};
use crate::rng::{stream, StreamDomain};
use crate::setfn::{SetFunction, SubsetVector};
use crate::smoothing::{oracle_batch, Objective, OracleVariant};

/// Largest ground set for the exact Lipschitz scan (2^n subsets).
pub const EXACT_LIPSCHITZ_LIMIT: usize = 10;

/// Clamp every coordinate into [0,1]. Euclidean projection onto the cube,
/// hence non-expansive.
pub fn project_cube(x: &mut [f64]) {
    for c in x.iter_mut() {
        *c = c.clamp(0.0, 1.0);
    }
}

/// Step size, smoothing parameter and iteration budget for a target
/// accuracy, as the convergence analysis prescribes.
#[derive(Clone, Copy, Debug)]
pub struct OfflineHyperparams {
    /// Smoothing parameter mu.
    pub mu: f64,
    /// Step size h.
    pub step: f64,
    /// Number of update steps N (the trace then has N + 1 rows).
    pub iterations: usize,
}

/// mu = eps / (2 L0 sqrt(n)), N = ceil(4 r0^2 L0^2 (n+4)^2 / eps^2 - 1),
/// h = r0 / (sqrt(N+1) L0 (n+4)), where r0 bounds ||x_0 - x*||.
pub fn derive_offline_hyperparams(
    n: usize,
    epsilon: f64,
    l0: f64,
    r0: f64,
) -> Result<OfflineHyperparams> {
    if n == 0 {
        return Err(CoreError::InvalidParameter("ground set is empty".into()));
    }
    for (name, v) in [("epsilon", epsilon), ("l0", l0), ("r0", r0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let nf = n as f64;
    let n4 = nf + 4.0;
    let mu = epsilon / (2.0 * l0 * nf.sqrt());
    let raw = 4.0 * r0 * r0 * l0 * l0 * n4 * n4 / (epsilon * epsilon) - 1.0;
    // Ceil with a relative snap so budgets that are integers in exact
    // arithmetic (r0 = sqrt(2) and friends) don't gain a step to rounding.
    let nearest = raw.round();
    let budget = if (raw - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    if budget >= u32::MAX as f64 {
        return Err(CoreError::InvalidParameter(format!(
            "iteration budget {budget:.3e} overflows; relax epsilon"
        )));
    }
    let iterations = budget.max(0.0) as usize;
    let step = r0 / (((iterations + 1) as f64).sqrt() * l0 * n4);
    Ok(OfflineHyperparams {
        mu,
        step,
        iterations,
    })
}

/// The accuracy guarantee in proof form: running N update steps with step h
/// and smoothing mu bounds the expected gap of the averaged iterate by
/// n / (2 h (N+1)) + mu L0 sqrt(n) + h L0^2 (n+4)^2 / 2 (squared-radius
/// term specialised to the cube, diameter^2 <= n).
pub fn offline_gap_bound(n: usize, step: f64, mu: f64, l0: f64, iterations: usize) -> f64 {
    let nf = n as f64;
    let n4 = nf + 4.0;
    nf / (2.0 * step * (iterations as f64 + 1.0))
        + mu * l0 * nf.sqrt()
        + step * l0 * l0 * n4 * n4 / 2.0
}

/// How a Lipschitz constant was obtained.
#[derive(Clone, Copy, Debug)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// True when the value came from the exhaustive chain scan rather than
    /// sampling.
    pub exact: bool,
}

#[derive(Clone, Copy, Debug)]
pub enum LipschitzMode {
    /// Exhaustive: the extension's Lipschitz constant is the largest
    /// subgradient norm over all sorting chains. n <= EXACT_LIPSCHITZ_LIMIT.
    Exact,
    /// Largest subgradient norm over sampled cube points; a lower bound in
    /// general.
    Sampled { points: usize, seed: u64 },
}

/// Lipschitz constant of the extension w.r.t. the Euclidean norm.
pub fn estimate_lipschitz(f: &SetFunction, mode: LipschitzMode) -> Result<LipschitzEstimate> {
    match mode {
        LipschitzMode::Exact => {
            let n = f.n();
            if n > EXACT_LIPSCHITZ_LIMIT {
                return Err(CoreError::CapabilityExceeded {
                    op: "estimate_lipschitz(exact)",
                    n,
                    limit: EXACT_LIPSCHITZ_LIMIT,
                });
            }
            let table = crate::setfn::value_table(f)?;
            // best[T] = largest sum of squared chain increments over orderings
            // that build T one element at a time.
            let mut best = vec![0.0f64; 1 << n];
            for t in 1..(1usize << n) {
                let mut b = f64::NEG_INFINITY;
                let ft = table[t];
                let mut rem = t;
                while rem != 0 {
                    let i = rem.trailing_zeros() as usize;
                    rem &= rem - 1;
                    let prev = t & !(1 << i);
                    let inc = ft - table[prev];
                    b = b.max(best[prev] + inc * inc);
                }
                best[t] = b;
            }
            Ok(LipschitzEstimate {
                value: best[(1 << n) - 1].sqrt(),
                exact: true,
            })
        }
        LipschitzMode::Sampled { points, seed } => {
            if points == 0 {
                return Err(CoreError::InvalidParameter(
                    "sampled Lipschitz estimate needs at least one point".into(),
                ));
            }
            let n = f.n();
            let mut rng = stream(seed, StreamDomain::Probe, 1);
            let mut best = 0.0f64;
            for _ in 0..points {
                let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let (_, g) = lovasz::lovasz_subgradient_quiet(f, &x)?;
                let norm = g.iter().map(|gi| gi * gi).sum::<f64>().sqrt();
                best = best.max(norm);
            }
            Ok(LipschitzEstimate {
                value: best,
                exact: false,
            })
        }
    }
}

/// Gradient source for the projected descent loop.
pub enum Descent<'a> {
    /// Two-point Gaussian smoothing of a continuous drive objective.
    ZeroOrder {
        objective: &'a dyn Objective,
        variant: OracleVariant,
        mu: f64,
        batch: usize,
    },
    /// First-order steps from an explicit subgradient oracle.
    Subgradient { oracle: &'a dyn SubgradientOracle },
}

/// Knobs of a single solver run.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Step size h > 0.
    pub step: f64,
    /// Number of update steps N.
    pub iterations: usize,
    /// Master seed; directions, thresholds and probes draw from disjoint
    /// streams underneath it.
    pub seed: u64,
    /// Starting point x_0.
    pub init: CubePoint,
    /// Record the quiet extension value every `trace_stride` rows (both
    /// endpoints are always recorded).
    pub trace_stride: usize,
}

impl SolveOptions {
    pub fn new(step: f64, iterations: usize, seed: u64, init: CubePoint) -> Self {
        SolveOptions {
            step,
            iterations,
            seed,
            init,
            trace_stride: 1,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.step
            )));
        }
        if self.trace_stride == 0 {
            return Err(CoreError::InvalidParameter(
                "trace stride must be at least 1".into(),
            ));
        }
        if self.init.n() != n {
            return Err(CoreError::DimensionMismatch {
                expected: n,
                got: self.init.n(),
            });
        }
        Ok(())
    }
}

/// Everything a run produced, one row per iterate x_0 .. x_N.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub iterates: Vec<Vec<f64>>,
    /// Quiet extension value of the true objective at stride rows.
    pub lovasz_values: Vec<Option<f64>>,
    /// Threshold rounding of each iterate, fresh tau per row.
    pub rounded_sets: Vec<SubsetVector>,
    /// f(S_k), the one counted rounding query per row.
    pub set_values: Vec<f64>,
    /// Set-oracle counter right after each row's rounding query.
    pub queries_cumulative: Vec<u64>,
    /// Cumulative wall clock, milliseconds, at each row.
    pub wall_ms: Vec<f64>,
}

/// The minimum-value entries of a trace.
#[derive(Clone, Debug)]
pub struct BestOfSequence {
    pub x_hat: Vec<f64>,
    pub s_hat: SubsetVector,
    /// Smallest recorded quiet extension value and its row.
    pub f_lovasz_best: f64,
    pub lovasz_index: usize,
    /// Smallest rounded set value and its row.
    pub f_set_best: f64,
    pub set_index: usize,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    /// Best recorded iterate (by quiet extension value) and best rounded set.
    pub fn best(&self) -> Result<BestOfSequence> {
        let mut lovasz_best: Option<(usize, f64)> = None;
        for (k, v) in self.lovasz_values.iter().enumerate() {
            if let Some(val) = v {
                if lovasz_best.map_or(true, |(_, b)| *val < b) {
                    lovasz_best = Some((k, *val));
                }
            }
        }
        let (lovasz_index, f_lovasz_best) = lovasz_best.ok_or_else(|| {
            CoreError::InvalidParameter("trace holds no extension values".into())
        })?;
        let (set_index, f_set_best) = self
            .set_values
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (k, &v)| match acc {
                Some((_, b)) if b <= v => acc,
                _ => Some((k, v)),
            })
            .ok_or_else(|| CoreError::InvalidParameter("trace is empty".into()))?;
        Ok(BestOfSequence {
            x_hat: self.iterates[lovasz_index].clone(),
            s_hat: self.rounded_sets[set_index].clone(),
            f_lovasz_best,
            lovasz_index,
            f_set_best,
            set_index,
        })
    }
}

/// Projected descent on the drive objective with per-iterate rounding
/// against `f`. Returns a trace of N + 1 rows.
pub fn solve_offline(f: &SetFunction, descent: &Descent, opts: &SolveOptions) -> Result<RunTrace> {
    let n = f.n();
    opts.validate(n)?;
    if let Descent::ZeroOrder { variant, batch, mu, .. } = descent {
        if variant.is_online() {
            return Err(CoreError::InvalidParameter(
                "online oracle variants need the half-step objective; use the online solver".into(),
            ));
        }
        if *batch == 0 {
            return Err(CoreError::InvalidParameter(
                "batch size must be at least 1".into(),
            ));
        }
        if !(mu.is_finite() && *mu > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "smoothing parameter must be positive, got {mu}"
            )));
        }
    }

    let rows = opts.iterations + 1;
    let mut trace = RunTrace {
        iterates: Vec::with_capacity(rows),
        lovasz_values: Vec::with_capacity(rows),
        rounded_sets: Vec::with_capacity(rows),
        set_values: Vec::with_capacity(rows),
        queries_cumulative: Vec::with_capacity(rows),
        wall_ms: Vec::with_capacity(rows),
    };
    let mut thresholds = stream(opts.seed, StreamDomain::Thresholds, 0);
    let start = Instant::now();
    let mut x = opts.init.as_slice().to_vec();

    for k in 0..rows {
        let record_value = k % opts.trace_stride == 0 || k == rows - 1;
        let quiet_value = if record_value {
            Some(lovasz::lovasz_exact_quiet(f, &x).map_err(|e| e.at_iteration(k))?)
        } else {
            None
        };
        let point = CubePoint::new(x.clone()).map_err(|e| e.at_iteration(k))?;
        let tau = lovasz::draw_threshold(&mut thresholds);
        let s = lovasz::threshold_round(&point, tau).map_err(|e| e.at_iteration(k))?;
        let fs = f.evaluate(&s).map_err(|e| e.at_iteration(k))?;
        trace.iterates.push(x.clone());
        trace.lovasz_values.push(quiet_value);
        trace.rounded_sets.push(s);
        trace.set_values.push(fs);
        trace.queries_cumulative.push(f.query_count());
        trace.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);

        if k == rows - 1 {
            break;
        }
        let g = match descent {
            Descent::ZeroOrder {
                objective,
                variant,
                mu,
                batch,
            } => {
                let mut directions = stream(opts.seed, StreamDomain::Directions, k as u64);
                oracle_batch(*variant, *objective, None, &x, *mu, *batch, &mut directions)
                    .map_err(|e| e.at_iteration(k))?
            }
            Descent::Subgradient { oracle } => {
                let (_, g) = oracle
                    .value_and_subgradient(&x)
                    .map_err(|e| e.at_iteration(k))?;
                g
            }
        };
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= opts.step * gi;
        }
        project_cube(&mut x);
    }
    Ok(trace)
}
