use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("reference signal is identically zero")]
    UndefinedReference,

    /// Loss exceeded 1000x its initial value. `history` holds every loss
    /// recorded up to and including the offending one.
    #[error("optimization diverged at iteration {iteration}: loss {loss} vs initial {initial}")]
    Divergence {
        iteration: usize,
        loss: f64,
        initial: f64,
        history: Vec<f64>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
