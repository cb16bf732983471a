use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input for {what}: {reason}")]
    InvalidInput { what: &'static str, reason: String },

    /// A simulated state stopped being finite. `stage` is the index of the
    /// step that produced it, `coordinate` the offending state entry.
    #[error("state diverged at stage {stage}: coordinate {coordinate} is non-finite")]
    Divergence { stage: usize, coordinate: usize },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Two pieces of data that must describe the same state disagree.
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("no horizon up to {cap} satisfies the requested bound")]
    HorizonNotFound { cap: usize },
}

pub type Result<V> = std::result::Result<V, Error>;
