use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue} below -{threshold}")]
    NotPsd { eigenvalue: f64, threshold: f64 },

    #[error("infeasible size k={k}: only {positive} strictly positive eigenvalues")]
    Infeasible { k: usize, positive: usize },

    #[error("saddlepoint solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("enumeration needs {required} subsets, guard is {limit}")]
    SizeGuard { required: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
