use thiserror::Error;

/// Errors produced by loading, validation, and solving.
#[derive(Debug, Error)]
pub enum CdmsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("load error in {path} at row {row}, column {col}: {reason}")]
    Load {
        path: String,
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("solver diverged: non-finite value in {what} at iteration {iter}, layer {layer}")]
    Divergence {
        what: String,
        iter: usize,
        layer: usize,
    },
}

impl CdmsError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CdmsError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
