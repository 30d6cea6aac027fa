use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::augment::AugmentError;
use crate::backtest::BacktestError;
use crate::features::FeatureError;
use crate::ingest::IngestError;
use crate::learners::LearnError;
use crate::peak_models::PeakModelError;
use crate::pipeline::ConfigError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; each variant wraps the error of one module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    PeakModel(#[from] PeakModelError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

/// Process exit codes used by the command-line front end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Data = 3,
    Numeric = 4,
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn exit_kind(&self) -> ExitKind {
        match self {
            Error::Config(_) => ExitKind::Config,
            Error::PeakModel(PeakModelError::BadThreshold(_) | PeakModelError::BadKind(_)) => ExitKind::Config,
            Error::Stage { source, .. } => source.exit_kind(),
            Error::Learn(e) if e.is_numeric() => ExitKind::Numeric,
            Error::Augment(AugmentError::Learn(e)) if e.is_numeric() => ExitKind::Numeric,
            Error::Analysis(AnalysisError::Eigen) => ExitKind::Numeric,
            _ => ExitKind::Data,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
