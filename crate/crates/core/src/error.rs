use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("incompatible configuration: {0}")]
    Incompatible(String),

    /// Gradient descent left the stable region; the objective trace up to the failure is kept.
    #[error("training diverged at iteration {iteration} (objective {objective:e})")]
    Diverged {
        iteration: usize,
        objective: f64,
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
