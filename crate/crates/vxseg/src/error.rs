use thiserror::Error;

/// Crate-wide error type. Variants map onto the stable error codes the CLI
/// prints to stderr.
#[derive(Debug, Error)]
pub enum VxError {
    #[error("shape mismatch in {context}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label value {value} out of range 0..{num_classes}")]
    LabelOutOfRange { value: u8, num_classes: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Train(String),

    #[error("metric undefined: {0}")]
    Metric(String),
}

impl VxError {
    /// Stable machine-readable code, prefixed on every CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            VxError::ShapeMismatch { .. } => "E_SHAPE",
            VxError::InvalidArgument(_) => "E_ARG",
            VxError::LabelOutOfRange { .. } => "E_LABEL",
            VxError::Config(_) => "E_CONFIG",
            VxError::Format { .. } => "E_FORMAT",
            VxError::Io { .. } => "E_IO",
            VxError::Checkpoint(_) => "E_CKPT",
            VxError::Train(_) => "E_TRAIN",
            VxError::Metric(_) => "E_METRIC",
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        VxError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        VxError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type VxResult<T> = Result<T, VxError>;
