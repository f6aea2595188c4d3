use thiserror::Error;

/// Errors raised across the library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("derivative order {order} not supported for degree {degree} (at most {max})")]
    UnsupportedDerivative { order: usize, degree: usize, max: usize },

    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: i64, lo: i64, hi: i64 },

    #[error("point {0} outside [0, 1]")]
    Domain(f64),

    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidBudget(f64),

    #[error("level-weight exponent must exceed 1, got {0}")]
    DivergentWeight(f64),

    #[error("local dual system is singular for basis function {index}")]
    SingularDualSystem { index: usize },

    #[error("wavelet construction failed at level {level} (degree {degree}): {reason}")]
    WaveletConstruction { level: u32, degree: usize, reason: String },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("record shapes differ: expected {expected} coordinates, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("no records to aggregate")]
    EmptyAggregate,

    #[error("resolution {level} outside {lo}..={hi}")]
    ResolutionOutOfRange { level: i64, lo: i64, hi: i64 },

    #[error("no feasible resolution: lower bound 2^j >= {lower:.4} exceeds upper bound {upper:.4}")]
    InfeasibleResolution { lower: f64, upper: f64 },

    #[error("mechanism or basis mismatch: {0}")]
    Mismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("bundle format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("corrupt bundle payload: {0}")]
    CorruptPayload(String),

    #[error("coordinate count mismatch for {key}: expected {expected}, found {found}")]
    CountMismatch { key: String, expected: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
