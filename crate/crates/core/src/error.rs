use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{what} is unstable (spectral radius {radius:.6})")]
    Unstable { what: String, radius: f64 },

    #[error("{what} is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e}, trace {trace:.3e})")]
    NotPsd {
        what: String,
        min_eigenvalue: f64,
        trace: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} failed to converge: {detail}")]
    NotConverged { what: String, detail: String },

    #[error("performance target {gamma_bar:.6} is outside the trade-off interval [{gamma_star:.6}, {gamma_open:.6}]")]
    Infeasible {
        gamma_bar: f64,
        gamma_star: f64,
        gamma_open: f64,
    },

    #[error("singular linear system in {0}")]
    Singular(String),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures that come from the numerics (instability, convergence)
    /// rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unstable { .. } | Error::NotConverged { .. } | Error::Singular(_) | Error::Infeasible { .. }
        )
    }
}
