use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or image shapes that do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Values outside an operation's domain (non-binary masks, bad ranges).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported op: {0} has no backward pass")]
    UnsupportedOp(&'static str),

    #[error("parse error in {field}: {reason}")]
    Parse { field: &'static str, reason: String },

    #[error("ingestion error at {index}: {reason}")]
    Ingestion { index: String, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("training failed to make progress: first epoch loss {first}, final epoch loss {last}")]
    NoProgress { first: f64, last: f64 },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn parse(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parse {
            field,
            reason: reason.into(),
        }
    }
}
