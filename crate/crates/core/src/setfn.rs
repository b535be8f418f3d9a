//! Ground sets, subset vectors, and query-counting set-function oracles.
//!
//! A [`SetFunction`] wraps a raw value oracle together with the ground set,
//! a cached normalisation offset (the raw value at the empty set), and a
//! query counter. All consumers see the normalised view f(S) - f(empty), so
//! f(empty) = 0 holds for every oracle; the offset is paid for with exactly
//! one raw query at construction time.
//!
//! Brute-force routines ([`is_submodular`], [`brute_force_min`],
//! [`value_table`]) are exhaustive and guarded by size limits; they evaluate
//! through the unmetered path so reference computations in tests and regret
//! ledgers never disturb a solver's query accounting.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CoreError, Result};

/// Maximum n for the exhaustive submodularity check.
pub const SUBMODULARITY_LIMIT: usize = 12;
/// Maximum n for brute-force minimisation and value tables.
pub const BRUTE_FORCE_LIMIT: usize = 20;
/// Maximum n for mask-based enumeration of subsets.
pub const MASK_LIMIT: usize = 63;

/// The ground set [n] = {1, ..., n}, stored 0-based internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroundSet {
    n: usize,
}

impl GroundSet {
    /// A ground set with n >= 1 elements.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::InvalidParameter(
                "ground set must have at least one element".into(),
            ));
        }
        Ok(GroundSet { n })
    }

    /// Number of elements.
    pub fn n(&self) -> usize {
        self.n
    }
}

/// Characteristic vector of a subset S of the ground set.
///
/// `Ord` is the derived lexicographic order on the bit pattern (element 0
/// first, absent < present), which is the tie-breaking order used by every
/// deterministic argmin in this crate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsetVector {
    bits: Vec<bool>,
}

impl SubsetVector {
    /// The empty subset of an n-element ground set.
    pub fn empty(n: usize) -> Self {
        SubsetVector {
            bits: vec![false; n],
        }
    }

    /// The full ground set.
    pub fn full(n: usize) -> Self {
        SubsetVector {
            bits: vec![true; n],
        }
    }

    /// Subset from explicit member indices (0-based).
    pub fn from_indices(n: usize, members: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in members {
            if i >= n {
                return Err(CoreError::DimensionMismatch { expected: n, got: i + 1 });
            }
            bits[i] = true;
        }
        Ok(SubsetVector { bits })
    }

    /// Subset from a bit mask with bit i = membership of element i.
    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        if n > MASK_LIMIT {
            return Err(CoreError::CapabilityExceeded {
                op: "SubsetVector::from_mask",
                n,
                limit: MASK_LIMIT,
            });
        }
        let bits = (0..n).map(|i| mask >> i & 1 == 1).collect();
        Ok(SubsetVector { bits })
    }

    /// Bit mask with bit i = membership of element i.
    pub fn mask(&self) -> Result<u64> {
        let n = self.len();
        if n > MASK_LIMIT {
            return Err(CoreError::CapabilityExceeded {
                op: "SubsetVector::mask",
                n,
                limit: MASK_LIMIT,
            });
        }
        Ok(self
            .bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | 1 << i } else { m }))
    }

    /// Ground-set size.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    /// True when no element is present.
    pub fn is_empty_set(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Membership of element i.
    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Cardinality |S|.
    pub fn cardinality(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Copy with element i added.
    pub fn with(&self, i: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[i] = true;
        SubsetVector { bits }
    }

    /// Add element i in place.
    pub fn insert(&mut self, i: usize) {
        self.bits[i] = true;
    }

    /// Member indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// The complement within the ground set.
    pub fn complement(&self) -> Self {
        SubsetVector {
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// Characteristic vector as reals, chi_S in {0,1}^n.
    pub fn characteristic(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Compact bit-string rendering, element 0 first.
    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Problem-family tag carried by an oracle for diagnostics and dispatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    GraphCut,
    ConcaveCardinality,
    LogDetMi,
    Custom,
}

/// Named concave scalar map for cardinality-based functions.
#[derive(Clone, Debug)]
pub enum ConcaveMap {
    /// phi(k) = a*sqrt(k) - b*k.
    Sqrt { a: f64, b: f64 },
    /// phi(k) = a*ln(1 + k).
    Log { a: f64 },
    /// phi(k) = a*k^gamma with gamma in (0, 1].
    Power { a: f64, gamma: f64 },
    /// Explicit table of phi(0), ..., phi(n).
    Table(Vec<f64>),
}

impl ConcaveMap {
    fn phi(&self, k: usize) -> f64 {
        let kf = k as f64;
        match self {
            ConcaveMap::Sqrt { a, b } => a * kf.sqrt() - b * kf,
            ConcaveMap::Log { a } => a * (1.0 + kf).ln(),
            ConcaveMap::Power { a, gamma } => a * kf.powf(*gamma),
            ConcaveMap::Table(t) => t[k],
        }
    }
}

type RawOracle = Box<dyn Fn(&SubsetVector) -> f64 + Send + Sync>;

/// A set-function value oracle with normalisation and query accounting.
pub struct SetFunction {
    ground: GroundSet,
    raw: RawOracle,
    offset: f64,
    queries: AtomicU64,
    kind: FamilyKind,
    label: String,
}

impl std::fmt::Debug for SetFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SetFunction")
            .field("n", &self.ground.n())
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("offset", &self.offset)
            .field("queries", &self.query_count())
            .finish()
    }
}

impl SetFunction {
    /// Wrap a raw oracle. The raw value at the empty set is queried once,
    /// cached as the normalisation offset, and counted.
    pub fn new(
        ground: GroundSet,
        kind: FamilyKind,
        label: impl Into<String>,
        raw: impl Fn(&SubsetVector) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let offset = raw(&SubsetVector::empty(ground.n()));
        if !offset.is_finite() {
            return Err(CoreError::Numeric(
                "raw oracle returned a non-finite value at the empty set".into(),
            ));
        }
        Ok(SetFunction {
            ground,
            raw: Box::new(raw),
            offset,
            queries: AtomicU64::new(1),
            kind,
            label: label.into(),
        })
    }

    /// Ground set.
    pub fn ground(&self) -> GroundSet {
        self.ground
    }

    /// Ground-set size.
    pub fn n(&self) -> usize {
        self.ground.n()
    }

    /// Family tag.
    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Human-readable instance label.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Cached raw value of the empty set.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn check_dim(&self, s: &SubsetVector) -> Result<()> {
        if s.len() != self.ground.n() {
            return Err(CoreError::DimensionMismatch {
                expected: self.ground.n(),
                got: s.len(),
            });
        }
        Ok(())
    }

    fn raw_normalised(&self, s: &SubsetVector) -> Result<f64> {
        self.check_dim(s)?;
        let v = (self.raw)(s) - self.offset;
        if !v.is_finite() {
            return Err(CoreError::Numeric(format!(
                "oracle '{}' returned a non-finite value on {}",
                self.label,
                s.bit_string()
            )));
        }
        Ok(v)
    }

    /// Normalised value f(S) - f(empty). Increments the query counter by
    /// exactly one.
    pub fn evaluate(&self, s: &SubsetVector) -> Result<f64> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.raw_normalised(s)
    }

    /// Normalised value without touching the query counter. Reserved for
    /// diagnostics, trace probes, and brute-force reference routines.
    pub fn evaluate_quiet(&self, s: &SubsetVector) -> Result<f64> {
        self.raw_normalised(s)
    }

    /// Number of counted queries so far (construction contributes one).
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Reset the counter to zero (test and benchmark plumbing).
    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Weighted undirected graph-cut function. Edges are (i, j, w) with
    /// 0-based endpoints, i != j, and w >= 0 (negative weights would break
    /// submodularity). f(S) sums the weights of edges with exactly one
    /// endpoint in S.
    pub fn graph_cut(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let ground = GroundSet::new(n)?;
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(CoreError::DimensionMismatch {
                    expected: n,
                    got: i.max(j) + 1,
                });
            }
            if i == j {
                return Err(CoreError::InvalidParameter(format!(
                    "graph cut: self-loop on element {i}"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(CoreError::InvalidParameter(format!(
                    "graph cut: edge ({i}, {j}) has invalid weight {w}"
                )));
            }
        }
        let edges = edges.to_vec();
        SetFunction::new(ground, FamilyKind::GraphCut, format!("cut-n{n}"), move |s| {
            edges
                .iter()
                .filter(|&&(i, j, _)| s.contains(i) != s.contains(j))
                .map(|&(_, _, w)| w)
                .sum()
        })
    }

    /// Cardinality-based function f(S) = phi(|S|) for a concave phi.
    /// Concavity is validated through second differences at construction.
    pub fn concave_cardinality(n: usize, map: ConcaveMap) -> Result<Self> {
        let ground = GroundSet::new(n)?;
        if let ConcaveMap::Table(t) = &map {
            if t.len() != n + 1 {
                return Err(CoreError::DimensionMismatch {
                    expected: n + 1,
                    got: t.len(),
                });
            }
        }
        let table: Vec<f64> = (0..=n).map(|k| map.phi(k)).collect();
        if table.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "concave map produced non-finite values".into(),
            ));
        }
        for k in 0..n.saturating_sub(1) {
            let second = table[k + 2] - 2.0 * table[k + 1] + table[k];
            if second > 1e-9 {
                return Err(CoreError::InvalidParameter(format!(
                    "scalar map is not concave: second difference {second} at k = {k}"
                )));
            }
        }
        SetFunction::new(
            ground,
            FamilyKind::ConcaveCardinality,
            format!("concave-n{n}"),
            move |s| table[s.cardinality()],
        )
    }

    /// Modular function f(S) = sum of per-element weights over S.
    pub fn modular(weights: &[f64]) -> Result<Self> {
        let ground = GroundSet::new(weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "modular weights must be finite".into(),
            ));
        }
        let w = weights.to_vec();
        SetFunction::new(
            ground,
            FamilyKind::Custom,
            format!("modular-n{}", w.len()),
            move |s| s.indices().iter().map(|&i| w[i]).sum(),
        )
    }

    /// Constant function; normalises to identically zero.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        SetFunction::new(GroundSet::new(n)?, FamilyKind::Custom, "constant", move |_| c)
    }

    /// Arbitrary raw oracle under the Custom family tag.
    pub fn from_fn(
        n: usize,
        label: impl Into<String>,
        raw: impl Fn(&SubsetVector) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        SetFunction::new(GroundSet::new(n)?, FamilyKind::Custom, label, raw)
    }
}

/// All 2^n normalised values indexed by membership mask, via the unmetered
/// path. Reference routine for small instances.
pub fn value_table(oracle: &SetFunction) -> Result<Vec<f64>> {
    let n = oracle.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(CoreError::CapabilityExceeded {
            op: "value_table",
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    (0..1u64 << n)
        .map(|mask| oracle.evaluate_quiet(&SubsetVector::from_mask(n, mask)?))
        .collect()
}

/// Exhaustive diminishing-returns check: for every S subset of T and every
/// i outside T, the marginal gain of i at S must be at least its gain at T.
/// A tiny slack absorbs floating-point noise from factorisation-backed
/// oracles; the check is otherwise exact.
pub fn is_submodular(oracle: &SetFunction) -> Result<bool> {
    let n = oracle.n();
    if n > SUBMODULARITY_LIMIT {
        return Err(CoreError::CapabilityExceeded {
            op: "is_submodular",
            n,
            limit: SUBMODULARITY_LIMIT,
        });
    }
    let table = value_table(oracle)?;
    let scale = table.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let full = (1u64 << n) - 1;
    for t in 0..=full {
        for i in 0..n {
            let bit = 1u64 << i;
            if t & bit != 0 {
                continue;
            }
            let gain_t = table[(t | bit) as usize] - table[t as usize];
            // Enumerate proper submasks of t, plus t itself handled above as
            // the base case; s iterates over all submasks including 0.
            let mut s = t;
            loop {
                let gain_s = table[(s | bit) as usize] - table[s as usize];
                if gain_s < gain_t - tol {
                    return Ok(false);
                }
                if s == 0 {
                    break;
                }
                s = (s - 1) & t;
            }
        }
    }
    Ok(true)
}

/// Exhaustive global minimiser of the normalised oracle. Ties break toward
/// the lexicographically smallest bit pattern (element 0 most significant),
/// making golden tests deterministic.
pub fn brute_force_min(oracle: &SetFunction) -> Result<(SubsetVector, f64)> {
    let n = oracle.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(CoreError::CapabilityExceeded {
            op: "brute_force_min",
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let table = value_table(oracle)?;
    let mut best_mask = 0u64;
    let mut best_value = table[0];
    let mut best_lex = 0u64; // mask bit-reversed so numeric order = lexicographic order
    for mask in 1..1u64 << n {
        let v = table[mask as usize];
        let lex = mask.reverse_bits() >> (64 - n);
        if v < best_value || (v == best_value && lex < best_lex) {
            best_value = v;
            best_mask = mask;
            best_lex = lex;
        }
    }
    Ok((SubsetVector::from_mask(n, best_mask)?, best_value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_cut() -> SetFunction {
        SetFunction::graph_cut(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn two_node_cut_values() {
        let f = two_node_cut();
        assert_eq!(f.evaluate(&SubsetVector::empty(2)).unwrap(), 0.0);
        assert_eq!(
            f.evaluate(&SubsetVector::from_indices(2, &[0]).unwrap()).unwrap(),
            1.0
        );
        assert_eq!(f.evaluate(&SubsetVector::full(2)).unwrap(), 0.0);
    }

    #[test]
    fn query_counter_is_exact() {
        let f = two_node_cut();
        assert_eq!(f.query_count(), 1, "construction queries the empty set once");
        let s = SubsetVector::from_indices(2, &[1]).unwrap();
        f.evaluate(&s).unwrap();
        f.evaluate(&s).unwrap();
        assert_eq!(f.query_count(), 3);
        f.evaluate_quiet(&s).unwrap();
        assert_eq!(f.query_count(), 3, "quiet path must not count");
    }

    #[test]
    fn normalisation_subtracts_offset() {
        let f = SetFunction::from_fn(3, "shifted", |s| 5.0 + s.cardinality() as f64).unwrap();
        assert_eq!(f.offset(), 5.0);
        assert_eq!(f.evaluate(&SubsetVector::empty(3)).unwrap(), 0.0);
        assert_eq!(f.evaluate(&SubsetVector::full(3)).unwrap(), 3.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = two_node_cut();
        let err = f.evaluate(&SubsetVector::empty(3)).unwrap_err();
        assert!(matches!(err, CoreError::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn graph_cut_is_submodular() {
        let f = SetFunction::graph_cut(
            4,
            &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (0, 3, 0.25)],
        )
        .unwrap();
        assert!(is_submodular(&f).unwrap());
    }

    #[test]
    fn cardinality_squared_is_not_submodular() {
        let f = SetFunction::from_fn(3, "card-squared", |s| {
            let k = s.cardinality() as f64;
            k * k
        })
        .unwrap();
        // Marginal of adding element 2: 1 at the empty set, 3 at {0}.
        let e = SubsetVector::empty(3);
        let i2 = SubsetVector::from_indices(3, &[2]).unwrap();
        let s1 = SubsetVector::from_indices(3, &[0]).unwrap();
        let s12 = SubsetVector::from_indices(3, &[0, 2]).unwrap();
        let gain_at_empty = f.evaluate_quiet(&i2).unwrap() - f.evaluate_quiet(&e).unwrap();
        let gain_at_s1 = f.evaluate_quiet(&s12).unwrap() - f.evaluate_quiet(&s1).unwrap();
        assert_eq!(gain_at_empty, 1.0);
        assert_eq!(gain_at_s1, 3.0);
        assert!(!is_submodular(&f).unwrap());
    }

    #[test]
    fn constant_function_is_submodular() {
        let f = SetFunction::constant(4, 7.5).unwrap();
        assert!(is_submodular(&f).unwrap());
        assert_eq!(f.evaluate(&SubsetVector::full(4)).unwrap(), 0.0);
    }

    #[test]
    fn modular_is_submodular_with_mixed_signs() {
        let f = SetFunction::modular(&[1.0, -2.0, 0.5]).unwrap();
        assert!(is_submodular(&f).unwrap());
    }

    #[test]
    fn brute_force_min_prefers_lexicographically_smallest() {
        // Both the empty set and {0,1} achieve 0; the empty set wins.
        let (s, v) = brute_force_min(&two_node_cut()).unwrap();
        assert_eq!(v, 0.0);
        assert!(s.is_empty_set());
    }

    #[test]
    fn brute_force_min_of_cardinality() {
        let f = SetFunction::from_fn(4, "card", |s| s.cardinality() as f64).unwrap();
        let (s, v) = brute_force_min(&f).unwrap();
        assert_eq!(v, 0.0);
        assert!(s.is_empty_set());
    }

    #[test]
    fn brute_force_min_of_sqrt_map() {
        let f =
            SetFunction::concave_cardinality(5, ConcaveMap::Sqrt { a: 1.0, b: 0.4 }).unwrap();
        // phi(k) = sqrt(k) - 0.4k is positive for k = 1..5, so the empty set wins.
        let (s, v) = brute_force_min(&f).unwrap();
        assert_eq!(v, 0.0);
        assert!(s.is_empty_set());
        assert!(is_submodular(&f).unwrap());
    }

    #[test]
    fn concavity_validation_rejects_convex_tables() {
        let err = SetFunction::concave_cardinality(3, ConcaveMap::Table(vec![0.0, 1.0, 4.0, 9.0]))
            .unwrap_err();
        assert!(matches!(err, CoreError::InvalidParameter(_)));
    }

    #[test]
    fn lexicographic_order_reads_element_zero_first() {
        let e = SubsetVector::empty(2);
        let s0 = SubsetVector::from_indices(2, &[0]).unwrap();
        let s1 = SubsetVector::from_indices(2, &[1]).unwrap();
        let full = SubsetVector::full(2);
        assert!(e < s1 && s1 < s0 && s0 < full);
    }

    #[test]
    fn capability_guards() {
        let f = SetFunction::from_fn(13, "big", |s| s.cardinality() as f64).unwrap();
        assert!(matches!(
            is_submodular(&f).unwrap_err(),
            CoreError::CapabilityExceeded { limit: 12, .. }
        ));
        let g = SetFunction::from_fn(21, "bigger", |s| s.cardinality() as f64).unwrap();
        assert!(matches!(
            brute_force_min(&g).unwrap_err(),
            CoreError::CapabilityExceeded { limit: 20, .. }
        ));
    }
}
