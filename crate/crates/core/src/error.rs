use std::fmt;

/// Errors raised by the construction, estimation, fitting and I/O routines.
#[derive(Debug)]
pub enum Error {
    /// A requested matrix would exceed the configured maximum size.
    SizeLimitExceeded { size: usize, limit: usize },
    /// Paley constructions require a specific residue class of `q` modulo 4.
    InvalidResidueClass { q: u64, expected: u64 },
    NotPrimePower { q: u64 },
    NoKnownConstruction { size: usize },
    Shape(String),
    NonFiniteInput,
    InsufficientData { count: u64 },
    NotSymmetric { residual: f64 },
    EigenFailure { sweeps: usize },
    DegenerateDistribution(String),
    DegenerateChannel { index: usize },
    RankDeficient { effective_rank: f64 },
    IncompleteNormalizer(String),
    TrainingDiverged { step: usize },
    InvalidArgument(String),
    ChecksumFailure,
    VersionMismatch { found: u16, expected: u16 },
    Format(String),
    Parse { line: usize, message: String },
    Io(std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SizeLimitExceeded { size, limit } => {
                write!(f, "matrix size {size} exceeds the limit of {limit}")
            }
            Error::InvalidResidueClass { q, expected } => {
                write!(f, "q = {q} is not congruent to {expected} mod 4")
            }
            Error::NotPrimePower { q } => write!(f, "q = {q} is not a supported prime"),
            Error::NoKnownConstruction { size } => {
                write!(f, "no known Hadamard construction for size {size}")
            }
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::NonFiniteInput => write!(f, "input contains NaN or infinite values"),
            Error::InsufficientData { count } => {
                write!(f, "at least 2 samples are required, got {count}")
            }
            Error::NotSymmetric { residual } => {
                write!(f, "matrix is not symmetric (max asymmetry {residual:e})")
            }
            Error::EigenFailure { sweeps } => {
                write!(f, "eigen-decomposition did not converge after {sweeps} iterations")
            }
            Error::DegenerateDistribution(msg) => write!(f, "degenerate distribution: {msg}"),
            Error::DegenerateChannel { index } => {
                write!(f, "channel {index} has a standard deviation below the floor")
            }
            Error::RankDeficient { effective_rank } => write!(
                f,
                "covariance is rank deficient (effective rank {effective_rank:.3})"
            ),
            Error::IncompleteNormalizer(msg) => write!(f, "incomplete normalizer: {msg}"),
            Error::TrainingDiverged { step } => write!(f, "training diverged at step {step}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ChecksumFailure => write!(f, "checksum verification failed"),
            Error::VersionMismatch { found, expected } => {
                write!(f, "unsupported format version {found} (expected {expected})")
            }
            Error::Format(msg) => write!(f, "malformed file: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error on line {line}: {message}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl Error {
    /// Stable variant name for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SizeLimitExceeded { .. } => "SizeLimitExceeded",
            Error::InvalidResidueClass { .. } => "InvalidResidueClass",
            Error::NotPrimePower { .. } => "NotPrimePower",
            Error::NoKnownConstruction { .. } => "NoKnownConstruction",
            Error::Shape(_) => "ShapeError",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::EigenFailure { .. } => "EigenFailure",
            Error::DegenerateDistribution(_) => "DegenerateDistribution",
            Error::DegenerateChannel { .. } => "DegenerateChannel",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::IncompleteNormalizer(_) => "IncompleteNormalizer",
            Error::TrainingDiverged { .. } => "TrainingDiverged",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ChecksumFailure => "ChecksumFailure",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::Format(_) => "FormatError",
            Error::Parse { .. } => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Format(err.to_string())
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
