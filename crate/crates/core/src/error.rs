use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MimeError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    Shape {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("threshold {index} of layer {layer} is {value}; thresholds must be finite and > 0")]
    InvalidThreshold { layer: usize, index: usize, value: f64 },

    #[error("threshold set does not match network: {0}")]
    ThresholdMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value produced at layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid hardware config: {0}")]
    InvalidHardware(String),

    #[error("no sparsity profile for task `{task}`{detail}")]
    MissingProfile { task: String, detail: String },

    #[error("inconsistent traffic query: {0}")]
    InconsistentFlags(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MimeError>;

impl MimeError {
    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numeric(&self) -> bool {
        matches!(self, MimeError::NonFinite { .. } | MimeError::Divergence { .. })
    }
}
