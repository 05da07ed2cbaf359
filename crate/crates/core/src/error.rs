use thiserror::Error;

/// Errors raised by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or incompatible data (empty bags, dimension mismatch, bad counts).
    #[error("input error: {0}")]
    Input(String),

    /// Invalid kernel, schedule or experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// An operation was requested outside its contract (e.g. KRR with an indefinite kernel).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Process exit code: 2 for I/O and data problems, 3 for configuration and
    /// contract violations, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Input(_) => 2,
            Error::Config(_) | Error::Contract(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
