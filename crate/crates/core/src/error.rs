//! Error type shared by all modules.

/// Library-wide error enumeration.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// A vector or subset had the wrong length for the ground set.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A scalar parameter violated its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An exhaustive routine was asked to run beyond its guarded size.
    #[error("{op}: n = {n} exceeds the supported limit {limit}")]
    CapabilityExceeded {
        op: &'static str,
        n: usize,
        limit: usize,
    },

    /// Input outside the operation's domain (non-finite coordinates etc.).
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical failure (factorisation breakdown, non-finite result).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Failure during a solver run, tagged with the iteration index.
    #[error("iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<CoreError>,
    },

    /// Invalid problem or experiment description.
    #[error("configuration error: {0}")]
    Config(String),
}

impl CoreError {
    /// Attach an iteration index to an error bubbling out of a solver step.
    pub fn at_iteration(self, iter: usize) -> CoreError {
        CoreError::AtIteration {
            iter,
            source: Box::new(self),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
