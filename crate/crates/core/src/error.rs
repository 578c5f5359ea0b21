use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("row {row} has zero norm")]
    DegenerateRow { row: usize },

    #[error("matrix is numerically singular")]
    Singular,

    #[error("parameter count {n} exceeds capacity {cap}")]
    Capacity { n: usize, cap: usize },

    #[error("accumulator holds no samples")]
    EmptyAccumulator,

    #[error("optimizer has not accumulated any curvature yet")]
    ColdStart,

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
