//! Submodular function minimisation over the value-oracle model.
//!
//! The library minimises a submodular set function f: 2^[n] -> R (with
//! f(emptyset) = 0 after normalisation) by descending its Lovász extension
//! f^L on the unit cube with a projected zeroth-order method: gradients of
//! the Gaussian-smoothed extension are estimated from two function values
//! along random directions, so only set-function queries are ever needed.
//! Cube iterates are converted back to sets by random threshold rounding,
//! whose expectation equals the extension value.
//!
//! Modules:
//! - [`setfn`]: ground sets, subset vectors, query-counting oracles, built-in
//!   problem families, and brute-force reference routines for small n.
//! - [`lovasz`]: exact extended-domain Lovász extension, stochastic and
//!   surrogate evaluation backends, subgradients, threshold rounding.
//! - [`smoothing`]: Gaussian smoothing and the two-point gradient oracles
//!   (forward/central/backward and the online split-time variants).
//! - [`optim`]: the offline projected descent solver, hyperparameter
//!   derivation, Lipschitz estimation, and run traces.
//! - [`online`]: time-varying sequences, the split-oracle online solver, and
//!   static/dynamic regret accounting with path lengths.
//! - [`clustering`]: the two-moons semi-supervised clustering stack (RBF
//!   kernels, log-det and mutual-information costs, Nyström approximation,
//!   Taylor surrogates, moving clusters).

pub mod clustering;
mod error;
pub mod lovasz;
pub mod online;
pub mod optim;
pub mod rng;
pub mod setfn;
pub mod smoothing;

pub use error::{CoreError, Result};
pub use lovasz::CubePoint;
pub use optim::{BestOfSequence, RunTrace};
pub use setfn::{GroundSet, SetFunction, SubsetVector};
