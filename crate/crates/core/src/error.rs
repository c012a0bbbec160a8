use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible with the operation.
    Shape { op: &'static str, detail: String },
    /// An argument is outside the operation's domain.
    InvalidArgument(String),
    /// A NaN or infinity appeared during a forward or backward pass.
    NonFinite { what: String },
    /// A statistic is undefined for the given data.
    Degenerate(String),
    /// Input collection was empty.
    Empty(&'static str),
    /// Two pipeline stages were configured for different image sizes.
    Incompatible(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape error in {op}: {detail}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::Incompatible(msg) => write!(f, "incompatible stages: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
