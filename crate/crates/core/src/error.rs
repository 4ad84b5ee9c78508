use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Pointwise failure of an expression evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainError {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    PowOfNegative,
    NonFinite,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainError::DivisionByZero => "division by zero",
            DomainError::LogOfNonPositive => "log of a non-positive number",
            DomainError::SqrtOfNegative => "sqrt of a negative number",
            DomainError::PowOfNegative => "non-integer power of a negative number",
            DomainError::NonFinite => "non-finite value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("variable x{index} at byte {pos} exceeds dimension {dim}")]
    VariableOutOfRange {
        index: usize,
        dim: usize,
        pos: usize,
    },
    #[error("{kind} in {what} at t = {t}, x = {x:?}")]
    Domain {
        kind: DomainError,
        what: String,
        t: f64,
        x: Vec<f64>,
    },
    #[error("path {path}, step {step}: {source}")]
    Path {
        path: usize,
        step: usize,
        source: Box<Error>,
    },
    #[error("path {path}, step {step}: state left the finite range")]
    NonFiniteState { path: usize, step: usize },
    #[error("gradient of {0} is not available")]
    MissingGradient(String),
    #[error("derivative data {0} is missing")]
    MissingDerivative(String),
    #[error("operator is not elliptic at t = {t}, x = {x:?} (smallest eigenvalue {eigenvalue})")]
    NotElliptic {
        t: f64,
        x: Vec<f64>,
        eigenvalue: f64,
    },
    #[error("singular linear system at time step {step}, row {row}")]
    Singular { step: usize, row: usize },
    #[error("duplicate sample points {0} and {1}")]
    DuplicatePoint(usize, usize),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
