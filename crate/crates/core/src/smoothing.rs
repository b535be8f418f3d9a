//! Gaussian smoothing and two-point random gradient oracles.
//!
//! For a continuous objective F the smoothed function is
//! F_mu(x) = E_u[F(x + mu*u)] with u standard normal (identity covariance
//! throughout; the general positive-definite shaping matrix collapses to the
//! identity because directions are sampled from N(0, I)). Its gradient
//! admits unbiased estimates from two function values along a sampled
//! direction:
//!
//! - forward:  g = (F(x + mu*u) - F(x)) / mu * u
//! - central:  g = (F(x + mu*u) - F(x - mu*u)) / (2 mu) * u
//! - backward: g = (F(x) - F(x - mu*u)) / mu * u
//!
//! The online split variants evaluate the two points against different
//! functions, modelling an objective that changes between the two queries
//! (time k and time k+1/2):
//!
//! - split:         g = (F_k(x + mu*u) - F_k+(x)) / mu * u
//! - split-reverse: g = (F_k+(x + mu*u) - F_k(x)) / mu * u
//!
//! The split estimate stays unbiased for grad F_mu,k because the F_k+(x)*u
//! term vanishes in expectation (E[u] = 0); the reverse form is unbiased for
//! grad F_mu,k+ instead and needs a bound on |F_k(x) - F_k+(x)| before it
//! helps a regret analysis.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::rng::{stream, StreamDomain};

/// A continuous objective over R^n, evaluable pointwise.
pub trait Objective {
    /// Value at x. Implementations must reject or never produce non-finite
    /// outputs.
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

/// Which two-point estimate an oracle evaluation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleVariant {
    Forward,
    Central,
    Backward,
    OnlineSplit,
    OnlineSplitReverse,
}

impl OracleVariant {
    /// True for the variants that need a half-step function handle.
    pub fn is_online(self) -> bool {
        matches!(self, OracleVariant::OnlineSplit | OracleVariant::OnlineSplitReverse)
    }
}

/// Parameters of the smoothed-gradient estimation.
#[derive(Clone, Copy, Debug)]
pub struct SmoothingConfig {
    /// Smoothing parameter mu > 0.
    pub mu: f64,
    /// Samples averaged per oracle call (the per-iteration batch).
    pub batch: usize,
    /// Two-point estimate variant.
    pub variant: OracleVariant,
    /// Master seed for the direction streams.
    pub seed: u64,
}

impl SmoothingConfig {
    /// Validate ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "smoothing parameter must be positive, got {}",
                self.mu
            )));
        }
        if self.batch == 0 {
            return Err(CoreError::InvalidParameter(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One standard-normal direction of dimension n.
pub fn gaussian_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn eval_checked(f: &dyn Objective, x: &[f64]) -> Result<f64> {
    let v = f.eval(x)?;
    if !v.is_finite() {
        return Err(CoreError::Numeric(
            "objective returned a non-finite value".into(),
        ));
    }
    Ok(v)
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "smoothing parameter must be positive, got {mu}"
        )));
    }
    Ok(())
}

fn check_dims(x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != u.len() {
        return Err(CoreError::DimensionMismatch {
            expected: x.len(),
            got: u.len(),
        });
    }
    Ok(())
}

fn shifted(x: &[f64], u: &[f64], scale: f64) -> Vec<f64> {
    x.iter().zip(u).map(|(xi, ui)| xi + scale * ui).collect()
}

fn scaled(u: &[f64], s: f64) -> Vec<f64> {
    u.iter().map(|ui| s * ui).collect()
}

/// Forward two-point estimate (1/mu)(F(x + mu*u) - F(x)) u.
pub fn oracle_forward(f: &dyn Objective, x: &[f64], mu: f64, u: &[f64]) -> Result<Vec<f64>> {
    check_mu(mu)?;
    check_dims(x, u)?;
    let ahead = eval_checked(f, &shifted(x, u, mu))?;
    let here = eval_checked(f, x)?;
    Ok(scaled(u, (ahead - here) / mu))
}

/// Central two-point estimate (F(x + mu*u) - F(x - mu*u)) / (2 mu) * u.
pub fn oracle_central(f: &dyn Objective, x: &[f64], mu: f64, u: &[f64]) -> Result<Vec<f64>> {
    check_mu(mu)?;
    check_dims(x, u)?;
    let ahead = eval_checked(f, &shifted(x, u, mu))?;
    let behind = eval_checked(f, &shifted(x, u, -mu))?;
    Ok(scaled(u, (ahead - behind) / (2.0 * mu)))
}

/// Backward two-point estimate (F(x) - F(x - mu*u)) / mu * u.
pub fn oracle_backward(f: &dyn Objective, x: &[f64], mu: f64, u: &[f64]) -> Result<Vec<f64>> {
    check_mu(mu)?;
    check_dims(x, u)?;
    let here = eval_checked(f, x)?;
    let behind = eval_checked(f, &shifted(x, u, -mu))?;
    Ok(scaled(u, (here - behind) / mu))
}

/// Split-time estimate (1/mu)(F_k(x + mu*u) - F_k+(x)) u. Unbiased for the
/// smoothed gradient of F_k at x.
pub fn oracle_online_split(
    f_now: &dyn Objective,
    f_half: &dyn Objective,
    x: &[f64],
    mu: f64,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_mu(mu)?;
    check_dims(x, u)?;
    let ahead = eval_checked(f_now, &shifted(x, u, mu))?;
    let here = eval_checked(f_half, x)?;
    Ok(scaled(u, (ahead - here) / mu))
}

/// Reverse split-time estimate (F_k+(x + mu*u) - F_k(x)) / mu * u. Unbiased
/// for the smoothed gradient of F_k+ at x; using it against F_k costs a
/// drift term proportional to the bound on |F_k - F_k+|.
pub fn oracle_online_reverse(
    f_now: &dyn Objective,
    f_half: &dyn Objective,
    x: &[f64],
    mu: f64,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_mu(mu)?;
    check_dims(x, u)?;
    let ahead = eval_checked(f_half, &shifted(x, u, mu))?;
    let here = eval_checked(f_now, x)?;
    Ok(scaled(u, (ahead - here) / mu))
}

/// Mean of `batch` independent single-sample estimates, directions drawn
/// sequentially from `rng`. Same expectation as a single sample with the
/// variance reduced by the batch size.
pub fn oracle_batch(
    variant: OracleVariant,
    f_now: &dyn Objective,
    f_half: Option<&dyn Objective>,
    x: &[f64],
    mu: f64,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(CoreError::InvalidParameter(
            "batch size must be at least 1".into(),
        ));
    }
    if variant.is_online() && f_half.is_none() {
        return Err(CoreError::InvalidParameter(
            "online oracle variants need the half-step function handle".into(),
        ));
    }
    let n = x.len();
    let mut acc = vec![0.0; n];
    for _ in 0..batch {
        let u = gaussian_direction(n, rng);
        let g = match variant {
            OracleVariant::Forward => oracle_forward(f_now, x, mu, &u)?,
            OracleVariant::Central => oracle_central(f_now, x, mu, &u)?,
            OracleVariant::Backward => oracle_backward(f_now, x, mu, &u)?,
            OracleVariant::OnlineSplit => {
                oracle_online_split(f_now, f_half.unwrap(), x, mu, &u)?
            }
            OracleVariant::OnlineSplitReverse => {
                oracle_online_reverse(f_now, f_half.unwrap(), x, mu, &u)?
            }
        };
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi;
        }
    }
    let inv = 1.0 / batch as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

/// Monte Carlo estimate of the smoothed value F_mu(x) = E_u[F(x + mu*u)].
/// Returns (mean, standard error). Test oracle, not a solver component.
pub fn smoothed_value_mc(
    f: &dyn Objective,
    x: &[f64],
    mu: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_mu(mu)?;
    if samples < 2 {
        return Err(CoreError::InvalidParameter(
            "smoothed_value_mc needs at least 2 samples".into(),
        ));
    }
    let mut rng = stream(seed, StreamDomain::Probe, 0);
    let n = x.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let u = gaussian_direction(n, &mut rng);
        let v = eval_checked(f, &shifted(x, &u, mu))?;
        sum += v;
        sum_sq += v * v;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - sum * sum / m) / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}
