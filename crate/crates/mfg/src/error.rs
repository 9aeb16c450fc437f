use thiserror::Error;

/// Crate-wide error type.
///
/// Numerical routines validate their inputs eagerly and return one of these
/// variants instead of producing silently wrong output; none of the library
/// paths panic on bad input.
#[derive(Debug, Error)]
pub enum MfgError {
    /// Two objects that must share a shape (grid size, horizon, action count)
    /// do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A probability vector has a negative entry or does not sum to one.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A sample set is empty or contains points outside the state domain.
    #[error("invalid samples: {0}")]
    InvalidSamples(String),

    /// Grid or environment parameters are out of their documented ranges.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The operation is defined only for one grid topology.
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    /// Configuration text could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A diagnostic identity that must hold by construction was violated.
    #[error("diagnostic check failed: {0}")]
    Diagnostic(String),

    /// Required run outputs are missing or unreadable.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MfgError>;
