use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: integrity check failed: {message}")]
    Integrity { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("report: {0}")]
    Report(String),
    #[error("missing prerequisite: {what} not found; run `{stage}` first")]
    Prerequisite { stage: &'static str, what: String },
    #[error("stale artifact {path}: produced with different settings; rerun `{stage}`")]
    Stale { stage: &'static str, path: PathBuf },
    #[error("workdir is locked by another run ({0}); remove the lock file if that run is dead")]
    Locked(PathBuf),
    #[error("pretrained weights for {backbone} not found at {path}; fetching is not supported, place the file there or use `weights = \"surrogate\"`")]
    MissingWeights { backbone: String, path: PathBuf },
    #[error(transparent)]
    Split(#[from] jutepest_core::split::SplitError),
    #[error(transparent)]
    Catalog(#[from] jutepest_core::catalog::CatalogError),
    #[error(transparent)]
    Preprocess(#[from] jutepest_core::preprocess::PreprocessError),
    #[error(transparent)]
    Augment(#[from] jutepest_core::augment::AugmentError),
    #[error(transparent)]
    Backbone(#[from] jutepest_core::backbone::BackboneError),
    #[error(transparent)]
    Model(#[from] jutepest_core::model::ModelError),
    #[error(transparent)]
    Train(#[from] jutepest_core::train::TrainError),
    #[error(transparent)]
    Metrics(#[from] jutepest_core::metrics::MetricsError),
    #[error(transparent)]
    Roc(#[from] jutepest_core::roc::RocError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: path.into(), line, message: message.into() }
    }

    /// Process exit status for this error.
    ///
    /// 1 runtime failure, 2 bad configuration, 3 missing or stale
    /// prerequisite stage, 4 workdir locked.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Prerequisite { .. } | Error::Stale { .. } => 3,
            Error::Locked(_) => 4,
            _ => 1,
        }
    }
}
