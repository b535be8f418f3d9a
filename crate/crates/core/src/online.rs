//! Online minimisation against a sequence of set functions.
//!
//! The protocol runs N+1 rounds. In round k the player holds x_k, commits
//! to the rounded set S_k and pays f_k(S_k). The gradient estimate is the
//! split two-point oracle: the step-ahead value comes from f_k, the base
//! value from the half-step function f_{k+1/2} that the adversary has
//! already moved to, so a round never needs the same function twice. The
//! whole sequence is fixed up front (an oblivious adversary): an
//! [`OnlineProblem`] owns 2(N+1) oracles, index 2k for round k and 2k+1
//! for its half step.
//!
//! Regret is measured two ways. Set-level regret compares paid losses
//! f_k(S_k) against comparator sets; extension-level regret compares the
//! quiet values f^L_k(x_k) instead (what the continuous analysis bounds).
//! Both use the same comparator totals because min over the cube of an
//! extension equals the set minimum: every extension value is an average
//! of set values under threshold rounding, and the vertex attains it.

use std::time::Instant;

use crate::error::{CoreError, Result};
use crate::lovasz::{self, CubePoint, ExactExtension};
use crate::optim::{estimate_lipschitz, LipschitzEstimate, LipschitzMode};
use crate::rng::{stream, StreamDomain};
use crate::setfn::{value_table, SetFunction, SubsetVector};
use crate::smoothing::{oracle_batch, OracleVariant};

/// Largest ground set for exhaustive comparator tables (2^n values per
/// round).
pub const COMPARATOR_LIMIT: usize = 12;

/// A fixed sequence of per-round and half-step objectives.
pub struct OnlineProblem {
    oracles: Vec<SetFunction>,
    n: usize,
    /// Declared bound on |f_k(S) - f_{k+1/2}(S)| over all rounds and sets,
    /// when the scenario knows one.
    pub drift_bound: Option<f64>,
}

impl OnlineProblem {
    /// Wrap an even-length oracle list: index 2k is round k, 2k+1 its half
    /// step.
    pub fn new(oracles: Vec<SetFunction>) -> Result<Self> {
        if oracles.is_empty() || oracles.len() % 2 != 0 {
            return Err(CoreError::InvalidParameter(format!(
                "online sequence needs an even, positive number of oracles, got {}",
                oracles.len()
            )));
        }
        let n = oracles[0].n();
        if let Some(bad) = oracles.iter().find(|f| f.n() != n) {
            return Err(CoreError::DimensionMismatch {
                expected: n,
                got: bad.n(),
            });
        }
        Ok(OnlineProblem {
            oracles,
            n,
            drift_bound: None,
        })
    }

    /// Build 2 * rounds oracles from a generator; `half` distinguishes the
    /// half-step function of a round.
    pub fn generate<F>(rounds: usize, mut make: F) -> Result<Self>
    where
        F: FnMut(usize, bool) -> Result<SetFunction>,
    {
        if rounds == 0 {
            return Err(CoreError::InvalidParameter(
                "online sequence needs at least one round".into(),
            ));
        }
        let mut oracles = Vec::with_capacity(2 * rounds);
        for k in 0..rounds {
            oracles.push(make(k, false)?);
            oracles.push(make(k, true)?);
        }
        OnlineProblem::new(oracles)
    }

    pub fn with_drift_bound(mut self, v: f64) -> Result<Self> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "drift bound must be non-negative, got {v}"
            )));
        }
        self.drift_bound = Some(v);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of rounds N + 1.
    pub fn rounds(&self) -> usize {
        self.oracles.len() / 2
    }

    pub fn round(&self, k: usize) -> &SetFunction {
        &self.oracles[2 * k]
    }

    pub fn half(&self, k: usize) -> &SetFunction {
        &self.oracles[2 * k + 1]
    }

    /// Largest extension Lipschitz constant across the whole sequence,
    /// half steps included (the constant the tuned rates need).
    pub fn sequence_lipschitz(&self, mode: LipschitzMode) -> Result<LipschitzEstimate> {
        let mut value = 0.0f64;
        let mut exact = true;
        for f in &self.oracles {
            let est = estimate_lipschitz(f, mode)?;
            value = value.max(est.value);
            exact &= est.exact;
        }
        Ok(LipschitzEstimate { value, exact })
    }
}

/// Step size and smoothing parameter of a tuned online run.
#[derive(Clone, Copy, Debug)]
pub struct OnlineHyperparams {
    pub step: f64,
    pub mu: f64,
}

fn check_tuning(n: usize, l0: f64) -> Result<()> {
    if n == 0 {
        return Err(CoreError::InvalidParameter("ground set is empty".into()));
    }
    if !(l0.is_finite() && l0 > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "Lipschitz constant must be positive, got {l0}"
        )));
    }
    Ok(())
}

/// Static-comparator tuning over N update steps:
/// h = sqrt(n) / (sqrt(N+1) L0 (n+4)), mu = 1 / (L0 sqrt(n) sqrt(N+1)).
pub fn derive_static_hyperparams(n: usize, l0: f64, iterations: usize) -> Result<OnlineHyperparams> {
    check_tuning(n, l0)?;
    let nf = n as f64;
    let horizon = (iterations as f64 + 1.0).sqrt();
    Ok(OnlineHyperparams {
        step: nf.sqrt() / (horizon * l0 * (nf + 4.0)),
        mu: 1.0 / (l0 * nf.sqrt() * horizon),
    })
}

/// Drifting-comparator tuning: the step absorbs the comparator path length
/// P*, h = sqrt(n + 3 sqrt(n) P*) / (sqrt(N+1) L0 (n+4)); mu as in the
/// static tuning.
pub fn derive_dynamic_hyperparams(
    n: usize,
    l0: f64,
    iterations: usize,
    p_star: f64,
) -> Result<OnlineHyperparams> {
    check_tuning(n, l0)?;
    if !(p_star.is_finite() && p_star >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "path length must be non-negative, got {p_star}"
        )));
    }
    let nf = n as f64;
    let horizon = (iterations as f64 + 1.0).sqrt();
    Ok(OnlineHyperparams {
        step: (nf + 3.0 * nf.sqrt() * p_star).sqrt() / (horizon * l0 * (nf + 4.0)),
        mu: 1.0 / (l0 * nf.sqrt() * horizon),
    })
}

/// Guarantee of the static tuning on the expected extension-level regret:
/// sqrt(N+1) (1 + sqrt(n) (n+4) L0).
pub fn static_regret_bound(n: usize, l0: f64, iterations: usize) -> f64 {
    let nf = n as f64;
    (iterations as f64 + 1.0).sqrt() * (1.0 + nf.sqrt() * (nf + 4.0) * l0)
}

/// Guarantee of the dynamic tuning against comparators of path length P*:
/// sqrt(N+1) (1 + (n+4) L0 sqrt(n + 3 sqrt(n) P*)).
pub fn dynamic_regret_bound(n: usize, l0: f64, iterations: usize, p_star: f64) -> f64 {
    let nf = n as f64;
    (iterations as f64 + 1.0).sqrt()
        * (1.0 + (nf + 4.0) * l0 * (nf + 3.0 * nf.sqrt() * p_star).sqrt())
}

/// Extra regret the reverse split oracle concedes: its estimate is unbiased
/// for the half-step function, and swapping the targets costs at most
/// 2 V per round, V bounding the within-round drift.
pub fn reverse_drift_penalty(v: f64, rounds: usize) -> f64 {
    2.0 * v * rounds as f64
}

/// Knobs of an online run.
#[derive(Clone, Debug)]
pub struct OnlineOptions {
    pub step: f64,
    pub mu: f64,
    /// OnlineSplit or OnlineSplitReverse.
    pub variant: OracleVariant,
    /// Two-point samples averaged per round.
    pub batch: usize,
    pub seed: u64,
    pub init: CubePoint,
    /// Also record the quiet half-step drift |f^L_k(x_k) - f^L_{k+1/2}(x_k)|.
    pub record_drift: bool,
}

impl OnlineOptions {
    pub fn new(params: OnlineHyperparams, seed: u64, init: CubePoint) -> Self {
        OnlineOptions {
            step: params.step,
            mu: params.mu,
            variant: OracleVariant::OnlineSplit,
            batch: 1,
            seed,
            init,
            record_drift: false,
        }
    }
}

/// What an online run produced, one row per round.
#[derive(Clone, Debug)]
pub struct OnlineTrace {
    pub iterates: Vec<Vec<f64>>,
    pub played_sets: Vec<SubsetVector>,
    /// Paid losses f_k(S_k), counted on the round oracles.
    pub losses: Vec<f64>,
    /// Quiet extension values f^L_k(x_k), every round.
    pub lovasz_values: Vec<f64>,
    /// Query total across the whole oracle sequence after each round's loss.
    pub queries_cumulative: Vec<u64>,
    pub wall_ms: Vec<f64>,
    /// Quiet |f^L_k(x_k) - f^L_{k+1/2}(x_k)| per round, when requested.
    pub drift_observed: Option<Vec<f64>>,
}

impl OnlineTrace {
    pub fn rounds(&self) -> usize {
        self.iterates.len()
    }
}

/// Play the split-oracle projected descent through the sequence.
pub fn solve_online(problem: &OnlineProblem, opts: &OnlineOptions) -> Result<OnlineTrace> {
    let n = problem.n();
    if !opts.variant.is_online() {
        return Err(CoreError::InvalidParameter(
            "online solver needs a split oracle variant".into(),
        ));
    }
    if !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "step size must be positive, got {}",
            opts.step
        )));
    }
    if !(opts.mu.is_finite() && opts.mu > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "smoothing parameter must be positive, got {}",
            opts.mu
        )));
    }
    if opts.batch == 0 {
        return Err(CoreError::InvalidParameter(
            "batch size must be at least 1".into(),
        ));
    }
    if opts.init.n() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: opts.init.n(),
        });
    }

    let rounds = problem.rounds();
    let mut running: u64 = problem
        .oracles
        .iter()
        .map(|f| f.query_count())
        .sum();
    let mut trace = OnlineTrace {
        iterates: Vec::with_capacity(rounds),
        played_sets: Vec::with_capacity(rounds),
        losses: Vec::with_capacity(rounds),
        lovasz_values: Vec::with_capacity(rounds),
        queries_cumulative: Vec::with_capacity(rounds),
        wall_ms: Vec::with_capacity(rounds),
        drift_observed: opts.record_drift.then(Vec::new),
    };
    let mut thresholds = stream(opts.seed, StreamDomain::Thresholds, 0);
    let start = Instant::now();
    let mut x = opts.init.as_slice().to_vec();

    for k in 0..rounds {
        let f_now = problem.round(k);
        let f_half = problem.half(k);
        let before_now = f_now.query_count();
        let before_half = f_half.query_count();

        let extension = lovasz::lovasz_exact_quiet(f_now, &x).map_err(|e| e.at_iteration(k))?;
        if let Some(drifts) = trace.drift_observed.as_mut() {
            let half_ext =
                lovasz::lovasz_exact_quiet(f_half, &x).map_err(|e| e.at_iteration(k))?;
            drifts.push((extension - half_ext).abs());
        }
        let point = CubePoint::new(x.clone()).map_err(|e| e.at_iteration(k))?;
        let tau = lovasz::draw_threshold(&mut thresholds);
        let s = lovasz::threshold_round(&point, tau).map_err(|e| e.at_iteration(k))?;
        let loss = f_now.evaluate(&s).map_err(|e| e.at_iteration(k))?;

        running += f_now.query_count() - before_now;
        trace.iterates.push(x.clone());
        trace.played_sets.push(s);
        trace.losses.push(loss);
        trace.lovasz_values.push(extension);
        trace.queries_cumulative.push(running);
        trace.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);

        if k + 1 == rounds {
            break;
        }
        let before_now = f_now.query_count();
        let now_ext = ExactExtension::new(f_now, true);
        let half_ext = ExactExtension::new(f_half, true);
        let mut directions = stream(opts.seed, StreamDomain::Directions, k as u64);
        let g = oracle_batch(
            opts.variant,
            &now_ext,
            Some(&half_ext),
            &x,
            opts.mu,
            opts.batch,
            &mut directions,
        )
        .map_err(|e| e.at_iteration(k))?;
        running += f_now.query_count() - before_now;
        running += f_half.query_count() - before_half;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= opts.step * gi;
        }
        crate::optim::project_cube(&mut x);
    }
    Ok(trace)
}

/// Comparator path with total and per-step Euclidean increments between
/// characteristic vectors.
#[derive(Clone, Debug)]
pub struct PathLength {
    pub total: f64,
    pub increments: Vec<f64>,
}

/// Sum of ||chi(S_k) - chi(S_{k-1})||_2 along a set sequence.
pub fn path_length(path: &[SubsetVector]) -> PathLength {
    let mut increments = Vec::new();
    for w in path.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut sq = 0usize;
        for i in 0..a.len() {
            if a.contains(i) != b.contains(i) {
                sq += 1;
            }
        }
        increments.push((sq as f64).sqrt());
    }
    PathLength {
        total: increments.iter().sum(),
        increments,
    }
}

/// Per-round exact minimisers (lexicographic tie-break), the drifting
/// comparator sequence.
pub fn minimiser_path(problem: &OnlineProblem) -> Result<Vec<SubsetVector>> {
    (0..problem.rounds())
        .map(|k| crate::setfn::brute_force_min(problem.round(k)).map(|(s, _)| s))
        .collect()
}

/// Regret of a finished run, set-level and extension-level, static and
/// dynamic, plus the comparator artefacts. One exhaustive table pass.
#[derive(Clone, Debug)]
pub struct RegretLedger {
    pub rounds: usize,
    /// Sum of paid losses f_k(S_k).
    pub loss_total: f64,
    /// Sum of quiet extension values f^L_k(x_k).
    pub lovasz_total: f64,
    pub static_set: f64,
    pub static_lovasz: f64,
    pub dynamic_set: f64,
    pub dynamic_lovasz: f64,
    /// Best fixed set in hindsight and its summed loss.
    pub static_comparator: SubsetVector,
    pub static_comparator_total: f64,
    /// Per-round minimisers and their path length.
    pub minimiser_path: Vec<SubsetVector>,
    pub path: PathLength,
    /// Largest observed half-step drift, when the trace recorded it.
    pub drift_max: Option<f64>,
}

fn lex_key(mask: usize, n: usize) -> u64 {
    (mask as u64).reverse_bits() >> (64 - n)
}

/// Build the ledger for a trace played on `problem`. Needs n <=
/// COMPARATOR_LIMIT for the exhaustive comparator tables.
pub fn regret_ledger(problem: &OnlineProblem, trace: &OnlineTrace) -> Result<RegretLedger> {
    let n = problem.n();
    if n > COMPARATOR_LIMIT {
        return Err(CoreError::CapabilityExceeded {
            op: "regret_ledger",
            n,
            limit: COMPARATOR_LIMIT,
        });
    }
    let rounds = problem.rounds();
    if trace.rounds() != rounds {
        return Err(CoreError::InvalidParameter(format!(
            "trace has {} rounds, problem has {rounds}",
            trace.rounds()
        )));
    }
    let size = 1usize << n;
    let mut cumulative = vec![0.0f64; size];
    let mut per_round_min_total = 0.0;
    let mut path = Vec::with_capacity(rounds);
    for k in 0..rounds {
        let table = value_table(problem.round(k))?;
        let mut best = f64::INFINITY;
        let mut best_mask = 0usize;
        for (mask, &v) in table.iter().enumerate() {
            cumulative[mask] += v;
            if v < best || (v == best && lex_key(mask, n) < lex_key(best_mask, n)) {
                best = v;
                best_mask = mask;
            }
        }
        per_round_min_total += best;
        path.push(SubsetVector::from_mask(n, best_mask as u64)?);
    }
    let mut comp_best = f64::INFINITY;
    let mut comp_mask = 0usize;
    for (mask, &v) in cumulative.iter().enumerate() {
        if v < comp_best || (v == comp_best && lex_key(mask, n) < lex_key(comp_mask, n)) {
            comp_best = v;
            comp_mask = mask;
        }
    }
    let loss_total: f64 = trace.losses.iter().sum();
    let lovasz_total: f64 = trace.lovasz_values.iter().sum();
    let drift_max = trace
        .drift_observed
        .as_ref()
        .map(|d| d.iter().cloned().fold(0.0f64, f64::max));
    Ok(RegretLedger {
        rounds,
        loss_total,
        lovasz_total,
        static_set: loss_total - comp_best,
        static_lovasz: lovasz_total - comp_best,
        dynamic_set: loss_total - per_round_min_total,
        dynamic_lovasz: lovasz_total - per_round_min_total,
        static_comparator: SubsetVector::from_mask(n, comp_mask as u64)?,
        static_comparator_total: comp_best,
        path: path_length(&path),
        minimiser_path: path,
        drift_max,
    })
}

/// Set-level static regret only.
pub fn static_regret(problem: &OnlineProblem, trace: &OnlineTrace) -> Result<f64> {
    Ok(regret_ledger(problem, trace)?.static_set)
}

/// Set-level dynamic regret only.
pub fn dynamic_regret(problem: &OnlineProblem, trace: &OnlineTrace) -> Result<f64> {
    Ok(regret_ledger(problem, trace)?.dynamic_set)
}
