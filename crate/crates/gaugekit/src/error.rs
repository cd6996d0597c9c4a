//! Crate-wide error type and result alias.

use std::fmt;

/// Errors produced by analysis, inference, and simulation routines.
#[derive(Debug)]
pub enum Error {
    /// A function argument is outside its mathematical domain.
    Domain(String),
    /// Input data is malformed: unbalanced design, duplicate cells,
    /// non-numeric or non-finite values.
    Data(String),
    /// Data is valid but carries no usable information for the requested
    /// quantity (e.g. zero within-unit variation).
    Degenerate(String),
    /// The requested moment does not exist for the given degrees of freedom.
    MomentUndefined(String),
    /// A truncation event with essentially zero probability mass.
    DegenerateTruncation(String),
    /// An iterative numerical routine failed to reach its tolerance.
    NonConvergence(String),
    /// Specification limits are inconsistent (e.g. UL <= LL).
    Spec(String),
    /// A simulation configuration failed validation.
    Config(String),
    /// The requested interval is not applicable to the estimate at hand
    /// (e.g. a log-scale interval with an estimate at or near zero).
    NotApplicable(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Degenerate(m) => write!(f, "degenerate data: {m}"),
            Error::MomentUndefined(m) => write!(f, "moment undefined: {m}"),
            Error::DegenerateTruncation(m) => write!(f, "degenerate truncation: {m}"),
            Error::NonConvergence(m) => write!(f, "did not converge: {m}"),
            Error::Spec(m) => write!(f, "specification error: {m}"),
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::NotApplicable(m) => write!(f, "not applicable: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code contract: 0 success, 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Spec(_) => 2,
            Error::Data(_) | Error::Config(_) | Error::Io(_) => 3,
            Error::Domain(_)
            | Error::Degenerate(_)
            | Error::MomentUndefined(_)
            | Error::DegenerateTruncation(_)
            | Error::NonConvergence(_)
            | Error::NotApplicable(_) => 4,
        }
    }
}
