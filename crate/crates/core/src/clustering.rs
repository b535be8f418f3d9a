//! Kernelised clustering benchmarks: two-moons point clouds, RBF kernels,
//! and the log-det mutual-information cut cost, together with its cheap
//! stand-ins (Nyström low-rank kernels and a second-order series surrogate).
//!
//! The cost of a cluster assignment A splits the ground set into (A, A^c)
//! and charges the mutual information between the two blocks of a Gaussian
//! process with covariance K, plus a modular term from label priors:
//!
//!   cost(A) = (logdet K_AA + logdet K_A^cA^c - logdet K_VV) / 2
//!             - sum_{i in A} ln eta_i - sum_{i not in A} ln(1 - eta_i)
//!
//! with eta_i the prior that point i belongs to cluster A (clamped away
//! from {0,1} for labelled points, 1/2 when unlabelled, which makes the
//! unlabelled contribution a constant). Principal-minor log-dets are
//! submodular, so the whole cost is, and the solvers in this crate apply.
//!
//! Every log-det uses the same resolved diagonal jitter. Evaluation walks
//! of the Lovász extension query nested prefixes, so the cost closure keeps
//! a two-slot chain cache of Cholesky factors: a prefix grown by one
//! element extends its factor in O(k^2) instead of refactorising.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::lovasz::SubgradientOracle;
use crate::rng::{stream, StreamDomain};
use crate::setfn::{FamilyKind, SetFunction, SubsetVector};
use crate::smoothing::Objective;

/// Labelled points keep this distance from certainty in their prior.
pub const ETA_CLAMP: f64 = 1e-3;

/// Ground sets above this cannot key the factor cache (subset masks).
const CHAIN_CACHE_LIMIT: usize = 63;

/// A planar point cloud with ground-truth cluster ids and a revealed-label
/// mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 2]>,
    /// True cluster of every point (false = first moon).
    pub truth: Vec<bool>,
    /// Whether the point's label is revealed to the cost.
    pub observed: Vec<bool>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.truth.len() != self.len() || self.observed.len() != self.len() {
            return Err(CoreError::InvalidParameter(
                "point cloud field lengths disagree".into(),
            ));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(CoreError::Numeric(format!("point {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Serialise as `x,y,label,labelled_flag` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,label,labelled_flag\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.points[i][0],
                self.points[i][1],
                self.truth[i] as u8,
                self.observed[i] as u8
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Config("point cloud file is empty".into()))?;
        if header.trim() != "x,y,label,labelled_flag" {
            return Err(CoreError::Config(format!(
                "unexpected point cloud header: {header}"
            )));
        }
        let mut cloud = PointCloud {
            points: Vec::new(),
            truth: Vec::new(),
            observed: Vec::new(),
        };
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(CoreError::Config(format!(
                    "row {}: expected 4 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| CoreError::Config(format!("row {}: {e}", lineno + 2)))
            };
            let flag = |s: &str| -> Result<bool> {
                match s.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(CoreError::Config(format!(
                        "row {}: flag must be 0 or 1, got {other}",
                        lineno + 2
                    ))),
                }
            };
            cloud.points.push([parse(fields[0])?, parse(fields[1])?]);
            cloud.truth.push(flag(fields[2])?);
            cloud.observed.push(flag(fields[3])?);
        }
        cloud.validate()?;
        Ok(cloud)
    }
}

/// Two interleaved half-circles with iid Gaussian coordinate noise. The
/// first ceil(p/2) points trace (cos t, sin t), the rest
/// (1 - cos t, 1/2 - sin t), t equispaced on [0, pi]. `labelled` point
/// indices, drawn uniformly without replacement, get their labels revealed.
pub fn two_moons(p: usize, noise: f64, labelled: usize, seed: u64) -> Result<PointCloud> {
    if p < 2 {
        return Err(CoreError::InvalidParameter(format!(
            "need at least 2 points, got {p}"
        )));
    }
    if labelled > p {
        return Err(CoreError::InvalidParameter(format!(
            "cannot reveal {labelled} labels out of {p} points"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "noise level must be non-negative, got {noise}"
        )));
    }
    let m0 = p - p / 2;
    let mut rng = stream(seed, StreamDomain::Data, 0);
    let mut points = Vec::with_capacity(p);
    let mut truth = Vec::with_capacity(p);
    let arc = |count: usize, i: usize| {
        if count == 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..m0 {
        let t = arc(m0, i);
        let (dx, dy): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        points.push([t.cos() + noise * dx, t.sin() + noise * dy]);
        truth.push(false);
    }
    for i in 0..(p - m0) {
        let t = arc(p - m0, i);
        let (dx, dy): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        points.push([1.0 - t.cos() + noise * dx, 0.5 - t.sin() + noise * dy]);
        truth.push(true);
    }
    let mut observed = vec![false; p];
    let mut labels = stream(seed, StreamDomain::Data, 1);
    for i in rand::seq::index::sample(&mut labels, p, labelled) {
        observed[i] = true;
    }
    let cloud = PointCloud {
        points,
        truth,
        observed,
    };
    cloud.validate()?;
    Ok(cloud)
}

/// One noise draw, drifting geometry: the second moon translates along +x
/// by `shift` per round. Returns 2 * rounds clouds at times 0, 1/2, 1,
/// 3/2, ... (round k at index 2k, its half step at 2k + 1), sharing the
/// base cloud's labels and noise.
pub fn moving_clusters(
    p: usize,
    noise: f64,
    labelled: usize,
    rounds: usize,
    shift: f64,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    if rounds == 0 {
        return Err(CoreError::InvalidParameter(
            "need at least one round".into(),
        ));
    }
    if !shift.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "shift must be finite, got {shift}"
        )));
    }
    let base = two_moons(p, noise, labelled, seed)?;
    let mut clouds = Vec::with_capacity(2 * rounds);
    for half_index in 0..2 * rounds {
        let t = half_index as f64 / 2.0;
        let mut cloud = base.clone();
        for (point, &moon1) in cloud.points.iter_mut().zip(&cloud.truth) {
            if moon1 {
                point[0] += shift * t;
            }
        }
        clouds.push(cloud);
    }
    Ok(clouds)
}

/// Prior that each point belongs to the cluster identified with the second
/// moon: clamped certainty for revealed labels, 1/2 otherwise.
pub fn label_priors(cloud: &PointCloud) -> Vec<f64> {
    cloud
        .truth
        .iter()
        .zip(&cloud.observed)
        .map(|(&moon1, &seen)| {
            if !seen {
                0.5
            } else if moon1 {
                1.0 - ETA_CLAMP
            } else {
                ETA_CLAMP
            }
        })
        .collect()
}

/// A positive semi-definite kernel with a resolved diagonal jitter: the
/// smallest value on a doubling ladder from 1e-8 to 1e-4 (relative to the
/// mean diagonal) that lets the full matrix factorise.
pub struct KernelMatrix {
    k: DMatrix<f64>,
    jitter: f64,
    logdet_full: f64,
}

impl KernelMatrix {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        let p = k.nrows();
        if p == 0 || k.ncols() != p {
            return Err(CoreError::InvalidParameter(format!(
                "kernel must be square and non-empty, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        for v in k.iter() {
            if !v.is_finite() {
                return Err(CoreError::Numeric("kernel has non-finite entries".into()));
            }
        }
        let scale = k.trace() / p as f64;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CoreError::Numeric(format!(
                "kernel diagonal mean {scale} is not positive"
            )));
        }
        let mut jitter = 1e-8 * scale;
        let cap = 1e-4 * scale;
        loop {
            let mut jittered = k.clone();
            for i in 0..p {
                jittered[(i, i)] += jitter;
            }
            if let Some(chol) = jittered.cholesky() {
                let logdet_full = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                return Ok(KernelMatrix {
                    k,
                    jitter,
                    logdet_full,
                });
            }
            jitter *= 2.0;
            if jitter > cap {
                return Err(CoreError::Numeric(
                    "kernel stays indefinite on the whole jitter ladder".into(),
                ));
            }
        }
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// logdet(K + jitter I) over the full ground set.
    pub fn logdet_full(&self) -> f64 {
        self.logdet_full
    }

    /// logdet of a jittered principal submatrix by fresh factorisation.
    /// Reference route for the chain cache, and fine for one-off queries.
    pub fn logdet_principal(&self, s: &SubsetVector) -> Result<f64> {
        if s.len() != self.n() {
            return Err(CoreError::DimensionMismatch {
                expected: self.n(),
                got: s.len(),
            });
        }
        let idx = s.indices();
        if idx.is_empty() {
            return Ok(0.0);
        }
        let m = idx.len();
        let sub = DMatrix::from_fn(m, m, |a, b| {
            self.k[(idx[a], idx[b])] + if a == b { self.jitter } else { 0.0 }
        });
        let chol = sub
            .cholesky()
            .ok_or_else(|| CoreError::Numeric("jittered principal minor is indefinite".into()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }
}

/// K_ij = exp(-||x_i - x_j||^2 / (2 sigma_sq)).
pub fn rbf_kernel(cloud: &PointCloud, sigma_sq: f64) -> Result<KernelMatrix> {
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "bandwidth must be positive, got {sigma_sq}"
        )));
    }
    cloud.validate()?;
    let p = cloud.len();
    let k = DMatrix::from_fn(p, p, |i, j| {
        let dx = cloud.points[i][0] - cloud.points[j][0];
        let dy = cloud.points[i][1] - cloud.points[j][1];
        (-(dx * dx + dy * dy) / (2.0 * sigma_sq)).exp()
    });
    KernelMatrix::new(k)
}

/// Incrementally grown Cholesky factor of a jittered principal submatrix.
struct Chain {
    order: Vec<usize>,
    prefix_masks: Vec<u64>,
    l: DMatrix<f64>,
    logdets: Vec<f64>,
}

impl Chain {
    fn new(p: usize) -> Self {
        Chain {
            order: Vec::with_capacity(p),
            prefix_masks: Vec::with_capacity(p),
            l: DMatrix::zeros(p, p),
            logdets: Vec::with_capacity(p),
        }
    }

    fn clear(&mut self) {
        self.order.clear();
        self.prefix_masks.clear();
        self.logdets.clear();
    }

    fn truncate(&mut self, len: usize) {
        self.order.truncate(len);
        self.prefix_masks.truncate(len);
        self.logdets.truncate(len);
    }

    /// Border the factor with element j: solve L w = K[order, j], then the
    /// new pivot is K_jj + jitter - ||w||^2. Fails (false) only if the
    /// pivot degenerates, which the jitter is sized to prevent.
    fn extend(&mut self, j: usize, k: &DMatrix<f64>, jitter: f64) -> bool {
        let m = self.order.len();
        let mut norm_sq = 0.0;
        for r in 0..m {
            let mut s = k[(self.order[r], j)];
            for c in 0..r {
                s -= self.l[(r, c)] * self.l[(m, c)];
            }
            let w = s / self.l[(r, r)];
            self.l[(m, r)] = w;
            norm_sq += w * w;
        }
        let d = k[(j, j)] + jitter - norm_sq;
        if !(d.is_finite() && d > 0.0) {
            return false;
        }
        self.l[(m, m)] = d.sqrt();
        let mask = self.prefix_masks.last().copied().unwrap_or(0) | (1u64 << j);
        self.order.push(j);
        self.prefix_masks.push(mask);
        self.logdets
            .push(self.logdets.last().copied().unwrap_or(0.0) + d.ln());
        true
    }

    fn rebuild(&mut self, order: &[usize], k: &DMatrix<f64>, jitter: f64) -> bool {
        self.clear();
        order.iter().all(|&j| self.extend(j, k, jitter))
    }
}

/// Two chain slots with LRU replacement: a Lovász walk grows its prefix
/// chain in one slot while complement-side queries churn the other.
struct ChainCache {
    slots: [Chain; 2],
    stamps: [u64; 2],
    tick: u64,
}

impl ChainCache {
    fn new(p: usize) -> Self {
        ChainCache {
            slots: [Chain::new(p), Chain::new(p)],
            stamps: [0, 0],
            tick: 0,
        }
    }

    fn logdet(&mut self, s: &SubsetVector, k: &DMatrix<f64>, jitter: f64) -> Option<f64> {
        let card = s.cardinality();
        if card == 0 {
            return Some(0.0);
        }
        let mask = s.mask().ok()?;
        self.tick += 1;
        // Exact prefix hit: the factor already covers this set.
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.prefix_masks.len() >= card && slot.prefix_masks[card - 1] == mask {
                self.stamps[i] = self.tick;
                return Some(slot.logdets[card - 1]);
            }
        }
        // One-element extension of some prefix (usually the tip).
        for i in 0..2 {
            let slot = &mut self.slots[i];
            if card >= 2 && slot.prefix_masks.len() >= card - 1 {
                let prev = slot.prefix_masks[card - 2];
                let added = mask & !prev;
                if prev & !mask == 0 && added.count_ones() == 1 {
                    slot.truncate(card - 1);
                    if slot.extend(added.trailing_zeros() as usize, k, jitter) {
                        self.stamps[i] = self.tick;
                        return Some(slot.logdets[card - 1]);
                    }
                    slot.clear();
                }
            }
        }
        // Miss: rebuild the least recently used slot.
        let victim = if self.stamps[0] <= self.stamps[1] { 0 } else { 1 };
        let slot = &mut self.slots[victim];
        if slot.rebuild(&s.indices(), k, jitter) {
            self.stamps[victim] = self.tick;
            Some(slot.logdets[card - 1])
        } else {
            slot.clear();
            None
        }
    }
}

fn validate_eta(eta: &[f64], n: usize) -> Result<()> {
    if eta.len() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: eta.len(),
        });
    }
    for (i, &e) in eta.iter().enumerate() {
        if !(e.is_finite() && e > 0.0 && e < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "prior {i} = {e} must lie strictly inside (0,1)"
            )));
        }
    }
    Ok(())
}

fn check_cache_limit(op: &'static str, n: usize) -> Result<()> {
    if n > CHAIN_CACHE_LIMIT {
        return Err(CoreError::CapabilityExceeded {
            op,
            n,
            limit: CHAIN_CACHE_LIMIT,
        });
    }
    Ok(())
}

/// The mutual-information cut cost described in the module docs, as a
/// normalised set function.
pub fn mutual_info_cost(kernel: Arc<KernelMatrix>, eta: Vec<f64>) -> Result<SetFunction> {
    let p = kernel.n();
    check_cache_limit("mutual_info_cost", p)?;
    validate_eta(&eta, p)?;
    let label = format!("mi-p{p}");
    let cache = Mutex::new(ChainCache::new(p));
    let raw = move |s: &SubsetVector| -> f64 {
        let mut cache = cache.lock().expect("factor cache poisoned");
        let complement = s.complement();
        let (jitter, k) = (kernel.jitter(), kernel.raw());
        let ld_a = match cache.logdet(s, k, jitter) {
            Some(v) => v,
            None => return f64::NAN,
        };
        let ld_c = match cache.logdet(&complement, k, jitter) {
            Some(v) => v,
            None => return f64::NAN,
        };
        let mut modular = 0.0;
        for i in 0..p {
            modular -= if s.contains(i) {
                eta[i].ln()
            } else {
                (1.0 - eta[i]).ln()
            };
        }
        0.5 * (ld_a + ld_c - kernel.logdet_full()) + modular
    };
    SetFunction::new(crate::setfn::GroundSet::new(p)?, FamilyKind::LogDetMi, label, raw)
}

/// Plain principal-minor log-det cost, logdet(K_AA + jitter I), the
/// backend benchmark objective.
pub fn logdet_cost(kernel: Arc<KernelMatrix>) -> Result<SetFunction> {
    let p = kernel.n();
    check_cache_limit("logdet_cost", p)?;
    let label = format!("logdet-p{p}");
    let cache = Mutex::new(ChainCache::new(p));
    let raw = move |s: &SubsetVector| -> f64 {
        let mut cache = cache.lock().expect("factor cache poisoned");
        cache
            .logdet(s, kernel.raw(), kernel.jitter())
            .unwrap_or(f64::NAN)
    };
    SetFunction::new(crate::setfn::GroundSet::new(p)?, FamilyKind::LogDetMi, label, raw)
}

/// Nyström approximation through `landmarks` uniformly sampled columns:
/// K~ = C W^+ C^T with C = K[:, J], W = K[J, J], the pseudo-inverse
/// truncated at 1e-10 of the top eigenvalue. The result re-resolves its
/// own jitter.
pub fn nystrom_approx(kernel: &KernelMatrix, landmarks: usize, seed: u64) -> Result<KernelMatrix> {
    let p = kernel.n();
    if landmarks == 0 || landmarks > p {
        return Err(CoreError::InvalidParameter(format!(
            "landmark count must lie in 1..={p}, got {landmarks}"
        )));
    }
    let mut rng = stream(seed, StreamDomain::Landmarks, 0);
    let mut chosen = rand::seq::index::sample(&mut rng, p, landmarks).into_vec();
    chosen.sort_unstable();
    let c = DMatrix::from_fn(p, landmarks, |i, j| kernel.raw()[(i, chosen[j])]);
    let w = DMatrix::from_fn(landmarks, landmarks, |a, b| {
        kernel.raw()[(chosen[a], chosen[b])]
    });
    let eigen = w.symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if lambda_max <= 0.0 {
        return Err(CoreError::Numeric(
            "landmark block has no positive eigenvalues".into(),
        ));
    }
    let cutoff = 1e-10 * lambda_max;
    let inv = DVector::from_iterator(
        landmarks,
        eigen
            .eigenvalues
            .iter()
            .map(|&l| if l > cutoff { 1.0 / l } else { 0.0 }),
    );
    // W^+ = V diag(inv) V^T.
    let scaled = &eigen.eigenvectors * DMatrix::from_diagonal(&inv);
    let w_pinv = &scaled * eigen.eigenvectors.transpose();
    let approx = &c * w_pinv * c.transpose();
    let symmetrised = (&approx + approx.transpose()) * 0.5;
    KernelMatrix::new(symmetrised)
}

/// Second-order series surrogate of A -> logdet(K_AA) in the polynomial
/// form tr(E) - tr(E^2)/2 with
///   tr(E)   = sum_i x_i K_ii - p
///   tr(E^2) = sum_ij x_i x_j K_ij^2 - 2 sum_i x_i K_ii + p,
/// which extends logdet's expansion to the whole cube without square
/// roots. Values and gradients are closed-form: no set-oracle queries.
pub struct TaylorSurrogate {
    diag: Vec<f64>,
    ksq: DMatrix<f64>,
}

impl TaylorSurrogate {
    pub fn new(kernel: &KernelMatrix) -> Self {
        let p = kernel.n();
        TaylorSurrogate {
            diag: (0..p).map(|i| kernel.raw()[(i, i)]).collect(),
            ksq: kernel.raw().map(|v| v * v),
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(CoreError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let p = self.n() as f64;
        let lin: f64 = x.iter().zip(&self.diag).map(|(xi, d)| xi * d).sum();
        let xv = DVector::from_column_slice(x);
        let quad = (&self.ksq * &xv).dot(&xv);
        let tr_e = lin - p;
        let tr_e2 = quad - 2.0 * lin + p;
        Ok(tr_e - 0.5 * tr_e2)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let xv = DVector::from_column_slice(x);
        let kx = &self.ksq * &xv;
        Ok(self
            .diag
            .iter()
            .zip(kx.iter())
            .map(|(d, k)| 2.0 * d - k)
            .collect())
    }
}

/// Closed-form drive for the mutual-information cost: symmetrised series
/// surrogate of the log-det part plus the exact linear extension of the
/// label priors, normalised to vanish at 0 and at 1 like the cost does.
pub struct TaylorMutualInfo {
    surrogate: TaylorSurrogate,
    linear: Vec<f64>,
    base: f64,
}

/// Build the drive. eta as in [`mutual_info_cost`].
pub fn taylor_mutual_info(kernel: &KernelMatrix, eta: &[f64]) -> Result<TaylorMutualInfo> {
    let p = kernel.n();
    validate_eta(eta, p)?;
    let surrogate = TaylorSurrogate::new(kernel);
    let zero = surrogate.value(&vec![0.0; p])?;
    let one = surrogate.value(&vec![1.0; p])?;
    Ok(TaylorMutualInfo {
        surrogate,
        linear: eta.iter().map(|&e| ((1.0 - e) / e).ln()).collect(),
        base: 0.5 * (zero + one),
    })
}

impl TaylorMutualInfo {
    pub fn n(&self) -> usize {
        self.surrogate.n()
    }

    fn flipped(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|xi| 1.0 - xi).collect()
    }
}

impl Objective for TaylorMutualInfo {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        let here = self.surrogate.value(x)?;
        let there = self.surrogate.value(&self.flipped(x))?;
        let modular: f64 = x.iter().zip(&self.linear).map(|(xi, c)| xi * c).sum();
        Ok(0.5 * (here + there) - self.base + modular)
    }
}

impl SubgradientOracle for TaylorMutualInfo {
    fn value_and_subgradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let value = self.eval(x)?;
        let g_here = self.surrogate.gradient(x)?;
        let g_there = self.surrogate.gradient(&self.flipped(x))?;
        let g = g_here
            .iter()
            .zip(&g_there)
            .zip(&self.linear)
            .map(|((a, b), c)| 0.5 * (a - b) + c)
            .collect();
        Ok((value, g))
    }
}

/// Fraction of points on the majority-consistent side, maximised over the
/// two ways of identifying (A, A^c) with the two clusters. Always in
/// [1/2, 1] for a two-way split.
pub fn clustering_accuracy(pred: &SubsetVector, truth: &[bool]) -> Result<f64> {
    let p = truth.len();
    if pred.len() != p {
        return Err(CoreError::DimensionMismatch {
            expected: p,
            got: pred.len(),
        });
    }
    if p == 0 {
        return Err(CoreError::InvalidParameter("empty point cloud".into()));
    }
    let matches = truth
        .iter()
        .enumerate()
        .filter(|&(i, &t)| pred.contains(i) == t)
        .count();
    Ok(matches.max(p - matches) as f64 / p as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn small_cloud(p: usize, seed: u64) -> PointCloud {
        two_moons(p, 0.05, p.min(4), seed).unwrap()
    }

    fn small_kernel(p: usize, seed: u64) -> Arc<KernelMatrix> {
        Arc::new(rbf_kernel(&small_cloud(p, seed), 0.05).unwrap())
    }

    #[test]
    fn noiseless_moons_trace_the_arcs() {
        let cloud = two_moons(8, 0.0, 0, 42).unwrap();
        assert_eq!(cloud.len(), 8);
        assert_eq!(cloud.truth, vec![false, false, false, false, true, true, true, true]);
        assert_abs_diff_eq!(cloud.points[0][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[0][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[3][0], -1.0, epsilon = 1e-12);
        let t = PI / 3.0;
        assert_abs_diff_eq!(cloud.points[1][0], t.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[1][1], t.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[4][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[4][1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[7][0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cloud.points[7][1], 0.5, epsilon = 1e-12);
        assert!(cloud.observed.iter().all(|&o| !o));
    }

    #[test]
    fn moons_are_reproducible_and_label_count_holds() {
        let a = two_moons(20, 0.05, 8, 7).unwrap();
        let b = two_moons(20, 0.05, 8, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observed.iter().filter(|&&o| o).count(), 8);
        let c = two_moons(20, 0.05, 8, 8).unwrap();
        assert_ne!(a.points, c.points, "seed changes the draw");
    }

    #[test]
    fn csv_roundtrip() {
        let cloud = two_moons(9, 0.02, 3, 5).unwrap();
        let text = cloud.to_csv();
        assert!(text.starts_with("x,y,label,labelled_flag\n"));
        let back = PointCloud::from_csv(&text).unwrap();
        assert_eq!(cloud, back);
        assert!(PointCloud::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn rbf_kernel_values() {
        let d = 0.1f64.sqrt();
        let cloud = PointCloud {
            points: vec![[0.0, 0.0], [d, 0.0]],
            truth: vec![false, true],
            observed: vec![false, false],
        };
        let k = rbf_kernel(&cloud, 0.05).unwrap();
        assert_abs_diff_eq!(k.raw()[(0, 0)], 1.0, epsilon = 1e-15);
        // Squared distance 0.1 over 2 * 0.05 = exp(-1).
        assert_abs_diff_eq!(k.raw()[(0, 1)], (-1.0f64).exp(), epsilon = 1e-12);
        assert!(k.jitter() >= 1e-8 * 0.999 && k.jitter() <= 1e-4);
    }

    #[test]
    fn label_priors_follow_the_convention() {
        let cloud = PointCloud {
            points: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            truth: vec![false, true, true],
            observed: vec![true, true, false],
        };
        let eta = label_priors(&cloud);
        assert_eq!(eta, vec![ETA_CLAMP, 1.0 - ETA_CLAMP, 0.5]);
    }

    #[test]
    fn mutual_info_cost_is_normalised_and_symmetric_in_logdet_part() {
        let kernel = small_kernel(6, 3);
        let eta = vec![0.5; 6];
        let f = mutual_info_cost(kernel.clone(), eta).unwrap();
        let empty = SubsetVector::empty(6);
        assert_eq!(f.evaluate_quiet(&empty).unwrap(), 0.0, "normalised at empty");
        // With flat priors the modular part is constant, so the cost is
        // symmetric under complements.
        for mask in 0..64u64 {
            let s = SubsetVector::from_mask(6, mask).unwrap();
            let v = f.evaluate_quiet(&s).unwrap();
            let vc = f.evaluate_quiet(&s.complement()).unwrap();
            assert_abs_diff_eq!(v, vc, epsilon = 1e-9);
        }
    }

    #[test]
    fn cached_cost_matches_fresh_factorisations() {
        let kernel = small_kernel(7, 11);
        let cloud = small_cloud(7, 11);
        let eta = label_priors(&cloud);
        let f = mutual_info_cost(kernel.clone(), eta.clone()).unwrap();
        for mask in 0..128u64 {
            let s = SubsetVector::from_mask(7, mask).unwrap();
            let ld_a = kernel.logdet_principal(&s).unwrap();
            let ld_c = kernel.logdet_principal(&s.complement()).unwrap();
            let mut modular = 0.0;
            for i in 0..7 {
                modular -= if s.contains(i) {
                    eta[i].ln()
                } else {
                    (1.0 - eta[i]).ln()
                };
            }
            let raw = 0.5 * (ld_a + ld_c - kernel.logdet_full()) + modular;
            let raw_empty = 0.5 * (kernel.logdet_full() - kernel.logdet_full())
                - eta.iter().map(|e| (1.0 - e).ln()).sum::<f64>();
            let expected = raw - raw_empty;
            assert_abs_diff_eq!(f.evaluate_quiet(&s).unwrap(), expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn chain_cache_survives_lovasz_walks() {
        // Two different walk orders exercise hits, extensions and rebuilds.
        let kernel = small_kernel(8, 13);
        let f = logdet_cost(kernel.clone()).unwrap();
        let xs = [
            [0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4],
            [0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6],
        ];
        for x in &xs {
            let via_cache = crate::lovasz::lovasz_exact_quiet(&f, x).unwrap();
            // Reference extension from fresh factorisations only.
            let perm = crate::lovasz::sorted_permutation(x).unwrap();
            let mut prefix = SubsetVector::empty(8);
            let mut prev = 0.0;
            let mut reference = 0.0;
            for &j in &perm {
                prefix.insert(j);
                let v = kernel.logdet_principal(&prefix).unwrap();
                reference += x[j] * (v - prev);
                prev = v;
            }
            assert_abs_diff_eq!(via_cache, reference, epsilon = 1e-8);
        }
    }

    #[test]
    fn mutual_info_cost_is_submodular() {
        let kernel = small_kernel(6, 17);
        let cloud = small_cloud(6, 17);
        let f = mutual_info_cost(kernel, label_priors(&cloud)).unwrap();
        assert!(crate::setfn::is_submodular(&f).unwrap());
    }

    #[test]
    fn logdet_cost_is_submodular() {
        let kernel = small_kernel(6, 19);
        let f = logdet_cost(kernel).unwrap();
        assert!(crate::setfn::is_submodular(&f).unwrap());
    }

    #[test]
    fn nystrom_with_all_landmarks_recovers_the_kernel() {
        let kernel = small_kernel(8, 23);
        let approx = nystrom_approx(&kernel, 8, 1).unwrap();
        let diff = (kernel.raw() - approx.raw()).abs().max();
        assert!(diff <= 1e-6, "max entry error {diff}");
    }

    #[test]
    fn nystrom_quality_improves_with_rank_on_average() {
        let kernel = small_kernel(12, 29);
        let err = |m: usize| {
            let approx = nystrom_approx(&kernel, m, 2).unwrap();
            (kernel.raw() - approx.raw()).norm()
        };
        assert!(err(10) <= err(2) + 1e-9);
        assert!(nystrom_approx(&kernel, 0, 0).is_err());
        assert!(nystrom_approx(&kernel, 13, 0).is_err());
    }

    #[test]
    fn taylor_surrogate_matches_hand_values() {
        let kernel = small_kernel(5, 31);
        let surrogate = TaylorSurrogate::new(&kernel);
        // x = 0: tr(E) = -p, tr(E^2) = p, value = -3p/2.
        assert_eq!(surrogate.value(&[0.0; 5]).unwrap(), -7.5);
        // RBF diagonal is 1: at x = 1, tr(E) = 0 and tr(E^2) is the sum of
        // squared off-diagonal entries.
        let off: f64 = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| kernel.raw()[(i, j)].powi(2))
            .sum();
        assert_abs_diff_eq!(surrogate.value(&[1.0; 5]).unwrap(), -0.5 * off, epsilon = 1e-12);
    }

    #[test]
    fn taylor_gradient_matches_finite_differences() {
        let kernel = small_kernel(6, 37);
        let cloud = small_cloud(6, 37);
        let drive = taylor_mutual_info(&kernel, &label_priors(&cloud)).unwrap();
        let x = [0.3, 0.7, 0.5, 0.2, 0.9, 0.4];
        let (_, g) = drive.value_and_subgradient(&x).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut up = x;
            up[i] += h;
            let mut down = x;
            down[i] -= h;
            let fd = (drive.eval(&up).unwrap() - drive.eval(&down).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn taylor_drive_vanishes_at_both_poles() {
        let kernel = small_kernel(6, 41);
        let drive = taylor_mutual_info(&kernel, &vec![0.5; 6]).unwrap();
        assert_abs_diff_eq!(drive.eval(&[0.0; 6]).unwrap(), 0.0, epsilon = 1e-12);
        // Flat priors kill the linear part too.
        assert_abs_diff_eq!(drive.eval(&[1.0; 6]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_is_assignment_symmetric() {
        let truth = vec![false, false, false, false, true, true, true, true];
        let first_half = SubsetVector::from_indices(8, &[0, 1, 2, 3]).unwrap();
        assert_eq!(clustering_accuracy(&first_half, &truth).unwrap(), 1.0);
        assert_eq!(
            clustering_accuracy(&first_half.complement(), &truth).unwrap(),
            1.0
        );
        let half_wrong = SubsetVector::from_indices(8, &[0, 1, 4, 5]).unwrap();
        assert_eq!(clustering_accuracy(&half_wrong, &truth).unwrap(), 0.5);
    }

    #[test]
    fn moving_clusters_translate_one_moon() {
        let clouds = moving_clusters(8, 0.0, 0, 3, 0.2, 9).unwrap();
        assert_eq!(clouds.len(), 6);
        let base = &clouds[0];
        // Index 3 is the half step of round 1: t = 1.5.
        for (i, point) in clouds[3].points.iter().enumerate() {
            let expected = if base.truth[i] {
                base.points[i][0] + 0.2 * 1.5
            } else {
                base.points[i][0]
            };
            assert_abs_diff_eq!(point[0], expected, epsilon = 1e-12);
            assert_abs_diff_eq!(point[1], base.points[i][1], epsilon = 1e-12);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(two_moons(1, 0.0, 0, 0).is_err());
        assert!(two_moons(4, -0.1, 0, 0).is_err());
        assert!(two_moons(4, 0.1, 5, 0).is_err());
        let cloud = small_cloud(4, 43);
        assert!(rbf_kernel(&cloud, 0.0).is_err());
        let kernel = small_kernel(4, 43);
        assert!(mutual_info_cost(kernel.clone(), vec![0.5; 3]).is_err());
        assert!(mutual_info_cost(kernel.clone(), vec![0.0, 0.5, 0.5, 0.5]).is_err());
        assert!(taylor_mutual_info(&kernel, &[1.0, 0.5, 0.5, 0.5]).is_err());
        assert!(moving_clusters(8, 0.0, 0, 0, 0.1, 0).is_err());
    }
}
