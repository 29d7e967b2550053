use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A linear system could not be factorized or solved to tolerance.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// Invalid argument outside a function's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dataset construction or preprocessing failure.
    #[error("data error: {0}")]
    Data(String),

    /// Configuration rejected before any work started.
    #[error("config error: {0}")]
    Config(String),

    /// Training aborted.
    #[error("training error: {0}")]
    Training(String),

    /// A metric is undefined on the given input.
    #[error("metric undefined: {0}")]
    Metric(String),

    /// Malformed cache or checkpoint file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
