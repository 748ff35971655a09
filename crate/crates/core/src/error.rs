use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// Magnitudes are reported as `f64` regardless of the scalar type in use.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not self-adjoint (max |A_ij - A_ji| = {asymmetry:e})")]
    NotSelfAdjoint { asymmetry: f64 },

    #[error("operator is not non-negative definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("determinant det(I - 2i T Qz) is singular (|det| = {modulus:e})")]
    SingularDeterminant { modulus: f64 },

    #[error("series tail bound {bound:e} not reached within {cap} terms")]
    SeriesTailUnreachable { bound: f64, cap: usize },

    #[error("quadrature for {what} did not converge (last change {change:e})")]
    QuadratureNotConverged { what: &'static str, change: f64 },

    #[error("oracle dimension cap exceeded: N = {n} > {cap}")]
    OracleCapExceeded { n: usize, cap: usize },

    #[error("commutation condition failed: {detail} (commutator norm {norm:e})")]
    CommutationFailed { detail: String, norm: f64 },

    #[error("positivity violated at t = {time}: min eigenvalue {min_eigenvalue:e}")]
    PositivityViolation { time: f64, min_eigenvalue: f64 },

    #[error("time {time} outside path horizon [0, {horizon}]")]
    OutsideHorizon { time: f64, horizon: f64 },

    #[error("volatility scale is unbounded or non-finite at t = {time}")]
    UnboundedScale { time: f64 },

    #[error("curve space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not supported: {0}")]
    Unsupported(String),

    #[error("self-test failed: {0}")]
    SelfTestFailed(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
