use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("pixel ({x}, {y}) outside {width}x{height} image")]
    PixelOutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("image plane does not intersect the volume")]
    PlaneMissesVolume,
    #[error("no frame pixel landed inside the reconstruction bounds")]
    EmptyReconstruction,
    #[error("volume has no known voxels to fill from")]
    NoKnownVoxels,
    #[error("source {src_w}x{src_h} is smaller than crop {crop_w}x{crop_h}")]
    CropTooLarge {
        src_w: usize,
        src_h: usize,
        crop_w: usize,
        crop_h: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
