use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegError {
    #[error(transparent)]
    Core(#[from] vesselid_core::Error),
    #[error("invalid segmenter config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset unusable: {0}")]
    Dataset(String),
    #[error("non-finite loss at epoch {epoch}, step {step}{}", saved.as_ref().map(|p| format!("; last finite state saved to {}", p.display())).unwrap_or_default())]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        saved: Option<PathBuf>,
    },
}

impl SegError {
    pub fn config(msg: impl Into<String>) -> Self {
        SegError::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        SegError::Shape(msg.into())
    }
}

impl From<SegError> for vesselid_core::Error {
    fn from(e: SegError) -> Self {
        match e {
            SegError::Core(inner) => inner,
            SegError::Shape(msg) => vesselid_core::Error::DimensionMismatch {
                expected: "model input".into(),
                actual: msg,
            },
            other => vesselid_core::Error::InvalidParameter(other.to_string()),
        }
    }
}

pub type Result<T, E = SegError> = std::result::Result<T, E>;
