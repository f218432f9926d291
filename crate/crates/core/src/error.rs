use std::path::PathBuf;

use crate::eval::EvalError;
use crate::index::IndexError;
use crate::kg::KgError;
use crate::model::ModelError;
use crate::synth::SynthError;
use crate::tensor::TensorError;
use crate::train::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 2 for bad inputs, 3 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Index(_)
            | Error::Kg(_)
            | Error::Eval(_)
            | Error::Synth(_) => 2,
            Error::Model(ModelError::Config(_)) => 2,
            Error::Train(TrainError::CorpusTooSmall { .. } | TrainError::Config(_)) => 2,
            Error::Tensor(_) | Error::Model(_) | Error::Train(_) | Error::Invariant(_) => 3,
        }
    }
}
