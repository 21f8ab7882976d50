use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("symbol is not finite at |xi| = {xi}")]
    NonFiniteSymbol { xi: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("inapplicable: {0}")]
    Inapplicable(String),

    #[error("insufficient coverage: {0}")]
    Coverage(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code: 2 for rejected input, 3 for numerical failure,
    /// 1 for file-system trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::GridMismatch(_) | Error::Inapplicable(_) | Error::Coverage(_) => 2,
            Error::NonFiniteSymbol { .. } | Error::Quadrature { .. } | Error::Numerical(_) => 3,
            Error::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
