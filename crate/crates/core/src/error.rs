//! Error types shared across the crate.

/// Errors produced by environment construction, loss evaluation, sampling,
/// training and verification.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (non-finite value, bad index,
    /// degenerate pair, empty input).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical parameter is out of its admissible range (e.g. beta <= 0).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An environment failed validation (shape, support, finiteness).
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    /// A dataset does not belong to the environment it is used with.
    #[error("dataset/environment mismatch: {0}")]
    DatasetMismatch(String),

    /// A calibrated operation received an uncalibrated method, or vice versa.
    #[error("wrong operation for method {0}")]
    WrongOperation(String),

    /// A run configuration is inconsistent (e.g. empirical objective without
    /// a dataset).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The training loss became non-finite.
    #[error("divergence at step {step}: loss is not finite")]
    Divergence { step: usize },

    /// A finite-difference probe evaluated the objective to a non-finite
    /// value at the named coordinate.
    #[error("finite-difference probe failed at logit ({prompt}, {response})")]
    ProbeFailure { prompt: usize, response: usize },

    /// File I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed serialized data.
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
