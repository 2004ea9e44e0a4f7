use thiserror::Error;

/// Errors surfaced by the tuner and simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Relative-L1 is undefined when the reference output is all zeros.
    #[error("degenerate reference: sum of |O_dense| is zero")]
    DegenerateReference,

    #[error("latent point {0} outside [0, 1]")]
    LatentOutOfRange(f64),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("incompatible config cache: {0}")]
    IncompatibleCache(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
