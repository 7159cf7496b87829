use alloc::string::String;

/// Errors raised anywhere in the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension error: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f32 },
    #[error("channel mismatch: model expects {expected} input channels, dataset has {found}")]
    ChannelMismatch { expected: usize, found: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err<T>(op: &'static str, detail: String) -> Result<T> {
    Err(Error::Dimension { op, detail })
}
