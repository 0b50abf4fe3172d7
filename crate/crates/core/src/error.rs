use std::fmt;

/// Errors raised by the numerical engine and its I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("points {first} and {second} coincide within {tolerance}")]
    DuplicatePoints {
        first: usize,
        second: usize,
        tolerance: f64,
    },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("value {0} is outside the support of the anamorphosis")]
    OutOfSupport(f64),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("scale {0} outside [0, 1]")]
    ScaleOutOfRange(f64),
    #[error("hermite degree {0} exceeds the supported maximum")]
    DegreeTooLarge(usize),
    #[error("kriging system is singular after jitter escalation")]
    SingularSystem,
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("degenerate conditional law: zero variance, the distribution is a point mass")]
    DegenerateLaw,
    #[error("exact block integration supports at most 4 nodes, got {0}")]
    DimensionTooLarge(usize),
    #[error("grid has {nodes} nodes, above the cap of {cap}")]
    GridTooLarge { nodes: usize, cap: usize },
    #[error("requested {requested} samples from {available} nodes")]
    CountExceedsNodes { requested: usize, available: usize },
    #[error("anamorphosis is not monotone: {0}")]
    NonMonotone(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::QuadratureFailure(_)
            | Error::SingularSystem
            | Error::NotPsd(_)
            | Error::DegenerateLaw
            | Error::NonMonotone(_) => ErrorClass::Numerical,
            _ => ErrorClass::Input,
        }
    }

    pub(crate) fn parse(msg: impl fmt::Display) -> Self {
        Error::Parse(msg.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
