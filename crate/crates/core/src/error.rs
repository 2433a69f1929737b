use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no visible landmarks")]
    NoVisibleLandmarks,
    #[error("too few landmarks: {0} (at least 3 required)")]
    TooFewLandmarks(usize),
    #[error("landmark count mismatch: expected {expected}, found {found}")]
    LandmarkCountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("degenerate shape")]
    DegenerateShape,
    #[error("zero-norm ground truth")]
    ZeroNormTruth,
    #[error("basis shape {0} is not centered")]
    UncenteredBasis(usize),
    #[error("infeasible constraint (relative residual {0:.3e})")]
    InfeasibleConstraint(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
