use std::path::PathBuf;

use qucert_core::grid::GridError;

/// Errors of the std front end. Input problems map to exit code 2,
/// failed computations to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid file not found: {}", .0.display())]
    GridFileNotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid grid: {0}")]
    Grid(#[from] GridError),
    #[error(transparent)]
    SimBench(#[from] crate::simbench::SimBenchError),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] qucert_core::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Compute(_) => 1,
            Error::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

macro_rules! compute_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Compute(e.into())
            }
        }
    )*};
}

compute_from!(
    qucert_core::powerflow::PowerFlowError,
    qucert_core::der::DerError,
    qucert_core::fit::FitError,
    qucert_core::circle::CircleError,
    qucert_core::sim::SimError,
    qucert_core::lti::LtiError
);
