//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: asymmetry {max_asym:.3e} exceeds tolerance {tol:.3e}")]
    NotSymmetric { max_asym: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e} below -{tol:.3e}")]
    NotPsd { eigenvalue: f64, tol: f64 },

    #[error("matrix is not positive definite: smallest eigenvalue {eigenvalue:.6e}")]
    NotSpd { eigenvalue: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("infeasible expected batch size {tau} for dimension {dim}")]
    InfeasibleTau { tau: f64, dim: usize },

    #[error("vector outside range of the smoothness matrix: distance {dist:.3e} exceeds {tol:.3e}")]
    OutOfRange { dist: f64, tol: f64 },

    #[error("operation not supported by this compressor mode")]
    UnsupportedMode,

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("empty dataset")]
    EmptyFile,

    #[error("too few datapoints: {points} for {nodes} nodes")]
    TooFewPoints { points: usize, nodes: usize },

    #[error("solver did not converge within {max_iters} iterations (residual {residual:.3e})")]
    NoConvergence { max_iters: usize, residual: f64 },

    #[error("missing constant for step-size rule: {0}")]
    MissingConstant(&'static str),

    #[error("run diverged at iteration {iter}: residual {residual:.3e} exceeds guard")]
    Diverged { iter: usize, residual: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
