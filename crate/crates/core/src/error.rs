use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Shapes or dimensions of the operands do not agree.
    Config(String),
    /// A spatial size is too small or zero.
    Size(String),
    /// An index (filter, feature, class) is out of range.
    Index { what: &'static str, index: usize, len: usize },
    /// Caller-supplied arguments violate a precondition.
    Argument(String),
    /// Input data contains values the algorithm cannot accept (NaN, inf).
    Data(String),
    /// A weight store does not match the network definition.
    Schema(String),
    /// A preprocessing specification cannot be applied to the image.
    Spec(String),
    /// The operation does not support the given featurizer.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Size(m) => write!(f, "size error: {m}"),
            Error::Index { what, index, len } => {
                write!(f, "index error: {what} {index} out of range (len {len})")
            }
            Error::Argument(m) => write!(f, "argument error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Schema(m) => write!(f, "schema error: {m}"),
            Error::Spec(m) => write!(f, "preprocess spec error: {m}"),
            Error::Unsupported(m) => write!(f, "unsupported featurizer: {m}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

impl core::error::Error for Error {}
