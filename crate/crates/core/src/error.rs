use alloc::string::String;

/// Errors raised by the collective completion routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("natural parameter {eta} is outside the domain of the {family} family")]
    Domain { family: &'static str, eta: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid observations: {0}")]
    InvalidObservations(String),
    #[error("label {0} is not a valid binary label")]
    InvalidLabel(f64),
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("the input matrix is identically zero")]
    ZeroMatrix,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;
