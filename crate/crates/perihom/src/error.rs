use thiserror::Error;

/// Failure modes surfaced by the library.
///
/// `Invalid` marks precondition violations in user-supplied data (bad
/// dimensions, malformed configs, arguments outside a documented range).
/// `Solver` marks an iterative or direct solve that could not reach its
/// tolerance. `Singular` marks a shift that sits on (or numerically on) the
/// spectrum of the operator being resolved. `Unsupported` marks requests
/// outside the implemented scope (non-rectangular lattices, gated
/// correctors, dimensions we do not discretize).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("singular shift: {0}")]
    Singular(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }
    pub fn singular(msg: impl Into<String>) -> Self {
        Error::Singular(msg.into())
    }
    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
