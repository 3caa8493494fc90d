use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    ConvergenceFailure { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tail index K={k} out of range for r={r} (need 0 <= K <= r-1)")]
    KOutOfRange { k: usize, r: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("weighted majorizer requires nondecreasing weights")]
    WeightsNotNondecreasing,

    #[error("line quadratics expanded at different centers ({0} vs {1})")]
    CenterMismatch(f64, f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("patch location {0:?} is not an anchor of the patch grid")]
    LocationOutOfGrid([usize; 2]),

    #[error("invalid patch geometry: {0}")]
    InvalidGeometry(String),

    #[error("infeasible sampling mask: {0}")]
    InfeasibleMask(String),

    #[error("reference matrix has zero norm")]
    ZeroReference,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("runs were computed on different problems: {0}")]
    ProblemMismatch(String),

    #[error("malformed archive: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
