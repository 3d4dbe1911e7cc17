use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `t > T`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration is invalid or numerically unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A density or score was requested where it does not exist
    /// (point-mass component at `t = 0`, or `s(t) = 0` in a conditional score).
    #[error("singular density: {0}")]
    Singular(String),

    /// The object does not provide the requested capability
    /// (log-density, divergence, ...).
    #[error("missing capability: {0}")]
    Capability(&'static str),

    /// A trajectory produced a non-finite state.
    #[error("integration diverged at step {step} (path {path})")]
    Diverged { step: usize, path: usize },

    /// Caller misuse (mismatched lengths, empty inputs, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
