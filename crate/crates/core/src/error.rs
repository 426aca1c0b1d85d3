use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A value left the domain of an operation (log of a non-positive
    /// entry, a non-finite result, an underflowing mixture, ...).
    #[error("domain error in {op} at index {index}: {detail}")]
    Domain {
        op: &'static str,
        index: usize,
        detail: String,
    },

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An optimizer received a non-finite gradient; the step was not applied.
    #[error("non-finite gradient in parameter {param} at entry {index}")]
    NonFiniteGradient { param: usize, index: usize },

    /// The inner optimisation diverged (loss became non-finite).
    #[error("divergence at outer iteration {outer}, inner iteration {inner}: {detail}")]
    Diverged {
        outer: usize,
        inner: usize,
        detail: String,
    },

    /// A checkpoint or data stream could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),

    /// An experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, index: usize, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            index,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(detail: impl Into<String>) -> Self {
        Error::Contract(detail.into())
    }
}
