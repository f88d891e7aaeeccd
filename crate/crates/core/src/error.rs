use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("covariance is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("covariance is not symmetric")]
    NotSymmetric,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("class mean of x1 is the zero vector")]
    DegenerateMean,
    #[error("classifier direction is the zero vector")]
    ZeroDirection,
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("pretext scale collapsed to zero on every restart")]
    DegenerateScale,
    #[error("two-layer ReLU representation has no induced linear direction")]
    NotLinearReducible,
    #[error("input {index} is not unit norm (norm {norm})")]
    NotNormalized { index: usize, norm: f64 },
    #[error("network width must be at least 1")]
    WidthTooSmall,
    #[error("labeled pool is empty")]
    EmptyPool,
    #[error("label must be -1 or +1, got {0}")]
    InvalidLabel(f64),
    #[error("oracle labels for S3 are unavailable (ingested data)")]
    MissingOracleLabels,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("rate fit needs at least 3 distinct sample sizes, got {0}")]
    InsufficientPoints(usize),
    #[error("mean regret must be positive for a log-log fit, got {0}")]
    NonPositiveMean(f64),
    #[error("conditional independence cannot hold for a noisy Gaussian regression model")]
    CiRegression,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable tag used in result files and CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotSymmetric => "NotSymmetric",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::DegenerateMean => "DegenerateMean",
            Error::ZeroDirection => "ZeroDirection",
            Error::ParseError { .. } => "ParseError",
            Error::SchemaViolation(_) => "SchemaViolation",
            Error::InsufficientData(_) => "InsufficientData",
            Error::DegenerateScale => "DegenerateScale",
            Error::NotLinearReducible => "NotLinearReducible",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::WidthTooSmall => "WidthTooSmall",
            Error::EmptyPool => "EmptyPool",
            Error::InvalidLabel(_) => "InvalidLabel",
            Error::MissingOracleLabels => "MissingOracleLabels",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::InsufficientPoints(_) => "InsufficientPoints",
            Error::NonPositiveMean(_) => "NonPositiveMean",
            Error::CiRegression => "CiRegression",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
