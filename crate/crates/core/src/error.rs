use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest row {row}: {message}")]
    ManifestRow { row: usize, message: String },

    #[error("sequence {run_id}/{well_id}: {message}")]
    Sequence {
        run_id: String,
        well_id: u32,
        message: String,
    },

    #[error("unknown label `{label}` for task {task}")]
    UnknownLabel { label: String, task: String },

    #[error("cannot split dataset: {0}")]
    Split(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("time index {t} out of range for {n} timesteps")]
    TimeIndex { t: usize, n: usize },

    #[error("unsupported image: {0}")]
    Image(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training: {0}")]
    Training(String),

    #[error("decision: {0}")]
    Decision(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Codec(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
