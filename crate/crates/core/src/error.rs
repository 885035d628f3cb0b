use thiserror::Error;

/// Library-wide error type.
///
/// `Data` and `Format` cover everything caused by bad input files or bad
/// arguments; `Internal` marks broken invariants that indicate a bug in the
/// library itself, never a user mistake.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data error: {0}")]
    Data(String),

    #[error("data error at line {line}: {msg}")]
    DataAt { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid probability {value} for {what}: must be in (0, 1]")]
    InvalidProbability { what: String, value: f64 },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("split plan is stale: the circuit changed since it was computed")]
    StalePlan,

    #[error("impossible evidence: P(evidence) = 0 in `{0}`")]
    ImpossibleEvidence(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("checksum mismatch: file says {expected}, content hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("internal invariant violation: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    /// 2 for anything caused by input data or files, 3 for internal bugs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) | Error::StalePlan => 3,
            _ => 2,
        }
    }
}
