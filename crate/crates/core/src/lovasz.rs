//! The Lovász extension: a convex interpolation of a set function.
//!
//! For f: 2^V -> R with f(empty) = 0 and x in R^n, sort the coordinates
//! descending (ties broken by ascending element index, so evaluation is
//! deterministic) into x_{j_1} >= ... >= x_{j_n} and form the prefix chain
//! A_k = {j_1, ..., j_k}. Then
//!
//!   f^L(x) = sum_k x_{j_k} (f(A_k) - f(A_{k-1}))
//!
//! costs exactly n oracle queries. f^L is positively homogeneous, agrees
//! with f on the cube vertices (f^L(chi_S) = f(S)), and is convex exactly
//! when f is submodular, which turns minimisation of f over 2^V into
//! minimisation of f^L over [0,1]^n.
//!
//! Rounding a fractional point back to a set uses a uniform threshold tau:
//! S_tau = {i : x(i) > tau}. The expectation over tau equals f^L(x), which
//! `rounding_expectation` computes by integrating over the at most n+1
//! constant intervals of tau rather than through the sorted-prefix sum, so
//! the two routes stay independent checks of one another.

use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::setfn::{SetFunction, SubsetVector};
use crate::smoothing::Objective;

/// A point of the solver domain [0,1]^n, validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CubePoint {
    coords: Vec<f64>,
}

impl CubePoint {
    /// Wrap coordinates, requiring every entry to lie in [0,1].
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for (i, &c) in coords.iter().enumerate() {
            if !(c.is_finite() && (0.0..=1.0).contains(&c)) {
                return Err(CoreError::Domain(format!(
                    "coordinate {i} = {c} is outside [0,1]"
                )));
            }
        }
        Ok(CubePoint { coords })
    }

    /// The centre (1/2, ..., 1/2), the usual uninformed initialiser.
    pub fn uniform_center(n: usize) -> Self {
        CubePoint {
            coords: vec![0.5; n],
        }
    }

    /// The vertex chi_S.
    pub fn vertex(s: &SubsetVector) -> Self {
        CubePoint {
            coords: s.characteristic(),
        }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

fn check_point(f: &SetFunction, x: &[f64]) -> Result<()> {
    if x.len() != f.n() {
        return Err(CoreError::DimensionMismatch {
            expected: f.n(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Indices of x sorted by coordinate descending, ties by ascending index.
pub fn sorted_permutation(x: &[f64]) -> Result<Vec<usize>> {
    for (i, &c) in x.iter().enumerate() {
        if !c.is_finite() {
            return Err(CoreError::Domain(format!(
                "coordinate {i} = {c} is not finite"
            )));
        }
    }
    let mut perm: Vec<usize> = (0..x.len()).collect();
    perm.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    Ok(perm)
}

/// Permutation plus the marginal gains f(A_k) - f(A_{k-1}) along the prefix
/// chain, in permutation order. Exactly n queries (f(A_0) = 0 by
/// normalisation, never evaluated).
fn extension_walk(f: &SetFunction, x: &[f64], quiet: bool) -> Result<(Vec<usize>, Vec<f64>)> {
    check_point(f, x)?;
    let perm = sorted_permutation(x)?;
    let n = x.len();
    let mut prefix = SubsetVector::empty(n);
    let mut gains = Vec::with_capacity(n);
    let mut prev = 0.0;
    for &j in &perm {
        prefix.insert(j);
        let val = if quiet {
            f.evaluate_quiet(&prefix)?
        } else {
            f.evaluate(&prefix)?
        };
        gains.push(val - prev);
        prev = val;
    }
    Ok((perm, gains))
}

/// Exact extension value, n counted oracle queries.
pub fn lovasz_exact(f: &SetFunction, x: &[f64]) -> Result<f64> {
    let (perm, gains) = extension_walk(f, x, false)?;
    Ok(perm.iter().zip(&gains).map(|(&j, g)| x[j] * g).sum())
}

/// Exact extension value without touching the query counter. For traces and
/// test oracles, never for driving a solver.
pub fn lovasz_exact_quiet(f: &SetFunction, x: &[f64]) -> Result<f64> {
    let (perm, gains) = extension_walk(f, x, true)?;
    Ok(perm.iter().zip(&gains).map(|(&j, g)| x[j] * g).sum())
}

/// Extension value together with a subgradient: g[j_k] = f(A_k) - f(A_{k-1}).
/// The same n queries yield both. The subgradient is a maximiser of <x, .>
/// over the base polytope, so <g, x> = f^L(x) holds by construction.
pub fn lovasz_subgradient(f: &SetFunction, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (perm, gains) = extension_walk(f, x, false)?;
    let mut g = vec![0.0; x.len()];
    let mut value = 0.0;
    for (&j, &gain) in perm.iter().zip(&gains) {
        g[j] = gain;
        value += x[j] * gain;
    }
    Ok((value, g))
}

/// Quiet twin of [`lovasz_subgradient`].
pub fn lovasz_subgradient_quiet(f: &SetFunction, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (perm, gains) = extension_walk(f, x, true)?;
    let mut g = vec![0.0; x.len()];
    let mut value = 0.0;
    for (&j, &gain) in perm.iter().zip(&gains) {
        g[j] = gain;
        value += x[j] * gain;
    }
    Ok((value, g))
}

/// Partial-sum estimate of the extension from ceil(rho * n) prefix queries.
///
/// Abel summation rewrites the sorted-prefix form as
/// sum_i (x_{j_i} - x_{j_{i+1}}) f(A_i) with x_{j_{n+1}} := 0; the estimator
/// keeps the terms at a uniformly sampled (without replacement) subset of
/// positions. rho = 1 recovers the exact value; rho < 1 is a biased,
/// cheaper stand-in whose error shrinks as the dropped weights x_{j_i} -
/// x_{j_{i+1}} do.
pub fn lovasz_stochastic(
    f: &SetFunction,
    x: &[f64],
    rho: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    check_point(f, x)?;
    if !(rho.is_finite() && rho > 0.0 && rho <= 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "sampling fraction must lie in (0,1], got {rho}"
        )));
    }
    let n = f.n();
    let perm = sorted_permutation(x)?;
    let k = ((rho * n as f64).ceil() as usize).clamp(1, n);
    let mut positions = rand::seq::index::sample(rng, n, k).into_vec();
    positions.sort_unstable();
    let mut prefix = SubsetVector::empty(n);
    let mut total = 0.0;
    let mut next = 0;
    for p in 0..n {
        prefix.insert(perm[p]);
        if next < positions.len() && positions[next] == p {
            let weight = x[perm[p]] - if p + 1 < n { x[perm[p + 1]] } else { 0.0 };
            total += weight * f.evaluate(&prefix)?;
            next += 1;
            if next == positions.len() {
                break;
            }
        }
    }
    Ok(total)
}

/// The threshold set S_tau = {i : x(i) > tau} (strict).
pub fn threshold_round(x: &CubePoint, tau: f64) -> Result<SubsetVector> {
    if !(tau.is_finite() && (0.0..1.0).contains(&tau)) {
        return Err(CoreError::InvalidParameter(format!(
            "threshold must lie in [0,1), got {tau}"
        )));
    }
    let mut s = SubsetVector::empty(x.n());
    for (i, &c) in x.as_slice().iter().enumerate() {
        if c > tau {
            s.insert(i);
        }
    }
    Ok(s)
}

/// A uniform threshold from the caller's stream.
pub fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>()
}

/// E_tau[f(S_tau)] for tau ~ U[0,1], computed by splitting [0,1] at the
/// distinct coordinates of x: on each open interval between consecutive
/// breakpoints the threshold set is constant. At most n+1 quiet queries.
/// Deliberately avoids the sorted-prefix formula so it can serve as an
/// independent check that the expectation equals the extension value.
pub fn rounding_expectation(f: &SetFunction, x: &CubePoint) -> Result<f64> {
    check_point(f, x.as_slice())?;
    let mut cuts: Vec<f64> = x.as_slice().to_vec();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut expectation = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // For tau in (lo, hi) no coordinate separates the pair, so
        // {i : x_i > tau} = {i : x_i >= hi}.
        let mut s = SubsetVector::empty(x.n());
        for (i, &c) in x.as_slice().iter().enumerate() {
            if c >= hi {
                s.insert(i);
            }
        }
        expectation += (hi - lo) * f.evaluate_quiet(&s)?;
    }
    Ok(expectation)
}

/// How a solver evaluates the extension of its objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LovaszBackend {
    /// Sorted-prefix formula, n queries per evaluation.
    Exact,
    /// Partial-sum estimate keeping a `rho` fraction of the positions.
    Stochastic { rho: f64 },
    /// Second-order series surrogate of a log-det objective; closed form,
    /// no set-oracle queries. Only meaningful for kernel problems.
    TaylorSurrogate,
    /// Extension of the objective rebuilt from a rank-`landmarks` kernel
    /// approximation. Only meaningful for kernel problems.
    LowRank { landmarks: usize },
}

impl LovaszBackend {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LovaszBackend::Stochastic { rho } => {
                if !(rho.is_finite() && rho > 0.0 && rho <= 1.0) {
                    return Err(CoreError::InvalidParameter(format!(
                        "sampling fraction must lie in (0,1], got {rho}"
                    )));
                }
            }
            LovaszBackend::LowRank { landmarks } => {
                if landmarks == 0 {
                    return Err(CoreError::InvalidParameter(
                        "low-rank backend needs at least one landmark".into(),
                    ));
                }
            }
            LovaszBackend::Exact | LovaszBackend::TaylorSurrogate => {}
        }
        Ok(())
    }

    /// Short label for traces and file names.
    pub fn tag(&self) -> &'static str {
        match self {
            LovaszBackend::Exact => "exact",
            LovaszBackend::Stochastic { .. } => "stochastic",
            LovaszBackend::TaylorSurrogate => "taylor",
            LovaszBackend::LowRank { .. } => "lowrank",
        }
    }
}

/// The exact extension as a continuous objective.
pub struct ExactExtension<'a> {
    f: &'a SetFunction,
    metered: bool,
}

impl<'a> ExactExtension<'a> {
    /// `metered` decides whether evaluations hit the query counter; solver
    /// drives meter, diagnostics do not.
    pub fn new(f: &'a SetFunction, metered: bool) -> Self {
        ExactExtension { f, metered }
    }
}

impl Objective for ExactExtension<'_> {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        if self.metered {
            lovasz_exact(self.f, x)
        } else {
            lovasz_exact_quiet(self.f, x)
        }
    }
}

/// The partial-sum estimator as a continuous objective. Each evaluation
/// draws a fresh position sample from its own stream, so the objective is
/// random but reproducible. Always metered.
pub struct StochasticExtension<'a> {
    f: &'a SetFunction,
    rho: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl<'a> StochasticExtension<'a> {
    pub fn new(f: &'a SetFunction, rho: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0 && rho <= 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "sampling fraction must lie in (0,1], got {rho}"
            )));
        }
        Ok(StochasticExtension {
            f,
            rho,
            rng: Mutex::new(rng),
        })
    }
}

impl Objective for StochasticExtension<'_> {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut rng = self.rng.lock().expect("extension rng poisoned");
        lovasz_stochastic(self.f, x, self.rho, &mut rng)
    }
}

/// Anything that can hand back a value and a subgradient at a point.
pub trait SubgradientOracle {
    fn value_and_subgradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Subgradients of the exact extension (metered, n queries per call).
pub struct ExtensionSubgradient<'a> {
    f: &'a SetFunction,
}

impl<'a> ExtensionSubgradient<'a> {
    pub fn new(f: &'a SetFunction) -> Self {
        ExtensionSubgradient { f }
    }
}

impl SubgradientOracle for ExtensionSubgradient<'_> {
    fn value_and_subgradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        lovasz_subgradient(self.f, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamDomain};
    use approx::assert_abs_diff_eq;

    fn two_node_cut() -> SetFunction {
        SetFunction::graph_cut(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn frozen_two_node_example() {
        let f = two_node_cut();
        let v = lovasz_exact(&f, &[0.7, 0.3]).unwrap();
        assert_abs_diff_eq!(v, 0.4, epsilon = 1e-12);
        let (v2, g) = lovasz_subgradient(&f, &[0.7, 0.3]).unwrap();
        assert_abs_diff_eq!(v2, 0.4, epsilon = 1e-12);
        assert_eq!(g, vec![1.0, -1.0]);
    }

    #[test]
    fn extension_agrees_with_f_on_vertices() {
        let f = SetFunction::graph_cut(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.5), (0, 3, 0.5)])
            .unwrap();
        for mask in 0..16u64 {
            let s = SubsetVector::from_mask(4, mask).unwrap();
            let direct = f.evaluate_quiet(&s).unwrap();
            let via_extension = lovasz_exact_quiet(&f, &s.characteristic()).unwrap();
            assert_eq!(via_extension, direct, "vertex {}", s.bit_string());
        }
    }

    #[test]
    fn tie_break_prefers_lower_index() {
        assert_eq!(sorted_permutation(&[0.5, 0.5]).unwrap(), vec![0, 1]);
        assert_eq!(sorted_permutation(&[0.5, 0.8, 0.5]).unwrap(), vec![1, 0, 2]);
        assert_eq!(sorted_permutation(&[1.0, 2.0, 3.0]).unwrap(), vec![2, 1, 0]);
    }

    #[test]
    fn ties_evaluate_consistently() {
        let f = two_node_cut();
        // Both coordinates equal: prefix chain {0}, {0,1}; value telescopes to
        // x * f(V) = 0 for the cut.
        assert_eq!(lovasz_exact_quiet(&f, &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn positively_homogeneous_on_dyadic_ray() {
        // Extended domain: the formula applies to any finite x.
        let f = two_node_cut();
        let x = [1.5, -0.75];
        let v = lovasz_exact_quiet(&f, &x).unwrap();
        assert_eq!(v, 2.25);
        let scaled: Vec<f64> = x.iter().map(|c| 2.5 * c).collect();
        assert_eq!(lovasz_exact_quiet(&f, &scaled).unwrap(), 2.5 * v);
    }

    #[test]
    fn convexity_spot_check() {
        let f = SetFunction::graph_cut(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let x = [0.9, 0.2, 0.6];
        let y = [0.1, 0.8, 0.5];
        for &lam in &[0.25, 0.5, 0.75] {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let lhs = lovasz_exact_quiet(&f, &mix).unwrap();
            let rhs = lam * lovasz_exact_quiet(&f, &x).unwrap()
                + (1.0 - lam) * lovasz_exact_quiet(&f, &y).unwrap();
            assert!(lhs <= rhs + 1e-12, "lambda {lam}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn query_accounting_is_exact() {
        let f = SetFunction::graph_cut(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)])
            .unwrap();
        let base = f.query_count();
        lovasz_exact(&f, &[0.1, 0.9, 0.4, 0.6, 0.5]).unwrap();
        assert_eq!(f.query_count(), base + 5);
        lovasz_subgradient(&f, &[0.1, 0.9, 0.4, 0.6, 0.5]).unwrap();
        assert_eq!(f.query_count(), base + 10);
        lovasz_exact_quiet(&f, &[0.1, 0.9, 0.4, 0.6, 0.5]).unwrap();
        assert_eq!(f.query_count(), base + 10, "quiet path must not meter");
        let mut rng = stream(7, StreamDomain::Backend, 0);
        lovasz_stochastic(&f, &[0.1, 0.9, 0.4, 0.6, 0.5], 0.5, &mut rng).unwrap();
        assert_eq!(f.query_count(), base + 13, "ceil(0.5 * 5) = 3 queries");
    }

    #[test]
    fn full_fraction_partial_sum_is_exact() {
        // Dyadic coordinates and integer cut weights make both summation
        // orders exact in floating point.
        let f = SetFunction::graph_cut(4, &[(0, 1, 1.0), (1, 2, 3.0), (0, 3, 2.0)]).unwrap();
        let x = [0.75, 0.25, 0.5, 1.0];
        let mut rng = stream(11, StreamDomain::Backend, 0);
        let est = lovasz_stochastic(&f, &x, 1.0, &mut rng).unwrap();
        let exact = lovasz_exact_quiet(&f, &x).unwrap();
        assert_eq!(est, exact);
    }

    #[test]
    fn stochastic_is_reproducible() {
        let f = SetFunction::graph_cut(6, &[(0, 3, 1.0), (1, 4, 1.0), (2, 5, 1.0)]).unwrap();
        let x = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2];
        let a = lovasz_stochastic(&f, &x, 0.4, &mut stream(3, StreamDomain::Backend, 5)).unwrap();
        let b = lovasz_stochastic(&f, &x, 0.4, &mut stream(3, StreamDomain::Backend, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threshold_round_is_strict() {
        let x = CubePoint::new(vec![0.7, 0.3]).unwrap();
        assert_eq!(threshold_round(&x, 0.5).unwrap().indices(), vec![0]);
        assert_eq!(threshold_round(&x, 0.75).unwrap().indices(), Vec::<usize>::new());
        assert_eq!(threshold_round(&x, 0.2).unwrap().indices(), vec![0, 1]);
        // tau equal to a coordinate excludes it.
        assert_eq!(threshold_round(&x, 0.3).unwrap().indices(), vec![0]);
        assert_eq!(threshold_round(&x, 0.0).unwrap().indices(), vec![0, 1]);
    }

    #[test]
    fn rounding_expectation_matches_extension_on_dyadics() {
        let f = two_node_cut();
        let x = CubePoint::new(vec![0.75, 0.25]).unwrap();
        let e = rounding_expectation(&f, &x).unwrap();
        assert_eq!(e, 0.5);
        assert_eq!(e, lovasz_exact_quiet(&f, x.as_slice()).unwrap());

        let g = SetFunction::graph_cut(3, &[(0, 1, 2.0), (1, 2, 4.0)]).unwrap();
        let y = CubePoint::new(vec![0.5, 1.0, 0.25]).unwrap();
        let ey = rounding_expectation(&g, &y).unwrap();
        assert_eq!(ey, lovasz_exact_quiet(&g, y.as_slice()).unwrap());
    }

    #[test]
    fn rounding_expectation_is_quiet() {
        let f = two_node_cut();
        let before = f.query_count();
        rounding_expectation(&f, &CubePoint::new(vec![0.6, 0.6]).unwrap()).unwrap();
        assert_eq!(f.query_count(), before);
    }

    #[test]
    fn cube_point_validation() {
        assert!(CubePoint::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(CubePoint::new(vec![-0.1]).is_err());
        assert!(CubePoint::new(vec![1.1]).is_err());
        assert!(CubePoint::new(vec![f64::NAN]).is_err());
        let s = SubsetVector::from_indices(3, &[0, 2]).unwrap();
        assert_eq!(CubePoint::vertex(&s).as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(CubePoint::uniform_center(2).as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn single_element_ground_set() {
        let f = SetFunction::modular(&[2.5]).unwrap();
        assert_eq!(lovasz_exact_quiet(&f, &[0.5]).unwrap(), 1.25);
        assert_eq!(lovasz_exact_quiet(&f, &[-1.0]).unwrap(), -2.5);
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        let f = two_node_cut();
        assert!(lovasz_exact_quiet(&f, &[f64::NAN, 0.0]).is_err());
        assert!(lovasz_exact_quiet(&f, &[f64::INFINITY, 0.0]).is_err());
        assert!(matches!(
            lovasz_exact_quiet(&f, &[0.0]).unwrap_err(),
            CoreError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn exact_extension_objective_meters_only_when_asked() {
        let f = two_node_cut();
        let base = f.query_count();
        let metered = ExactExtension::new(&f, true);
        metered.eval(&[0.3, 0.9]).unwrap();
        assert_eq!(f.query_count(), base + 2);
        let quiet = ExactExtension::new(&f, false);
        quiet.eval(&[0.3, 0.9]).unwrap();
        assert_eq!(f.query_count(), base + 2);
    }

    #[test]
    fn backend_validation() {
        assert!(LovaszBackend::Exact.validate().is_ok());
        assert!(LovaszBackend::Stochastic { rho: 0.5 }.validate().is_ok());
        assert!(LovaszBackend::Stochastic { rho: 0.0 }.validate().is_err());
        assert!(LovaszBackend::Stochastic { rho: 1.5 }.validate().is_err());
        assert!(LovaszBackend::LowRank { landmarks: 0 }.validate().is_err());
        assert_eq!(LovaszBackend::TaylorSurrogate.tag(), "taylor");
    }
}
