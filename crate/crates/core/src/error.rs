use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PadError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("no face detected")]
    NoFace,

    #[error("manifest validation error: {0}")]
    Manifest(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PadError {
    /// Usage and configuration problems map to exit code 2, everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            PadError::Config(_) | PadError::Manifest(_) | PadError::Protocol(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PadError::Config(_) => "config",
            PadError::Ingestion { .. } => "ingestion",
            PadError::NoFace => "no_face",
            PadError::Manifest(_) => "manifest",
            PadError::Protocol(_) => "protocol",
            PadError::Contract(_) => "contract",
            PadError::UndefinedMetric(_) => "undefined_metric",
            PadError::Unsupported(_) => "unsupported",
            PadError::Io(_) => "io",
            PadError::Image(_) => "image",
            PadError::Json(_) => "json",
            PadError::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = PadError> = std::result::Result<T, E>;
