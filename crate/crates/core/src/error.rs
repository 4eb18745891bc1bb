use scribble_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} at pixel {pixel} is not below num_classes = {num_classes}")]
    Label {
        label: u8,
        pixel: usize,
        num_classes: usize,
    },

    #[error("missing parameter `{0}`")]
    MissingParam(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn config_err(msg: impl Into<String>) -> CoreError {
    CoreError::Config(msg.into())
}

pub(crate) fn shape_err(msg: impl Into<String>) -> CoreError {
    CoreError::Shape(msg.into())
}
