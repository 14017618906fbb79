use alloc::string::String;

/// Errors raised by the samplers and their building blocks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("matrix out of domain: {0}")]
    MatrixDomain(String),
    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty sample: {0}")]
    EmptySample(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("empty chain")]
    EmptyChain,
    #[error("too many failed replications: {failed} of {total}")]
    Replications { failed: usize, total: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::ParameterDomain(msg.into())
}
