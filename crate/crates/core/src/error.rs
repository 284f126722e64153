use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported dimension {0} (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("edge index out of range: ({0}, {1}) with n = {2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("random graph budget exhausted after {0} attempts")]
    BudgetExhausted(usize),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("autodiff: {0}")]
    Autodiff(String),
    #[error("quadrature grid too coarse: refinement changed the score by {0:e}")]
    GridTooCoarse(f64),
    #[error("config: {0}")]
    Config(String),
    #[error("file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
