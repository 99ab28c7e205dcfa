use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("atoms {first} and {second} sit at the same position")]
    DegenerateGeometry { first: usize, second: usize },

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("{context}: extrapolation residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Convergence {
        context: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Numerical(_) | Error::Fit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
