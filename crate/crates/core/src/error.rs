use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on shape.
    Shape {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A dimension or hyperparameter is out of its valid range.
    InvalidArgument(String),
    /// A computation produced NaN or infinity.
    NonFinite(String),
    /// Input data violates a precondition (labels, class counts, schema).
    Data(String),
    /// A loss or gradient became non-finite during training.
    Diverged { epoch: usize, detail: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Length mismatch of a one-dimensional operand.
    pub(crate) fn length(context: &'static str, expected: usize, found: usize) -> Self {
        Error::shape(context, (expected, 1), (found, 1))
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::Shape {
            context,
            expected,
            found,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                context,
                expected,
                found,
            } => write!(
                f,
                "shape mismatch in {context}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Diverged { epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}
