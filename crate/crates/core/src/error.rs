use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or incompatible inputs (dimension mismatch, empty lists, domain violations).
    #[error("input error: {0}")]
    Input(String),

    /// A hyperparameter or constructor argument is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A factorization or iteration broke down.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Weights whose normalizer vanishes (Nadaraya-Watson denominator, zero total mass).
    #[error("degenerate weights: {0}")]
    Degenerate(String),

    /// The operation needs something the loss does not provide, e.g. a subgradient.
    #[error("capability error: {0}")]
    Capability(String),

    /// The sup bound of a loss could not be estimated on its sampled domain.
    #[error("bound estimation failed: {0}")]
    BoundEstimation(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Input(format!(
            "dimension mismatch: expected {expected}, got {got}"
        )));
    }
    Ok(())
}
