use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("state does not match the network or model: {0}")]
    StateMismatch(String),
    #[error("non-finite state after step {step}")]
    NonFiniteState { step: usize },
    #[error("cannot classify the zero state")]
    ZeroState,
    #[error("estimation window is empty")]
    EmptyWindow,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
