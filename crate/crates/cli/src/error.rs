use std::io;

use qadst::backend::BackendError;
use qadst::corpus::CorpusError;
use qadst::eval::EvalError;
use qadst::synthesis::SynthesisError;
use qadst::tracker::TrackError;
use thiserror::Error;

/// A failed run, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Backend(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: io::Error) -> Self {
        CliError::Config(format!("{context}: {e}"))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match &e {
            CorpusError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::Backend(b) => CliError::Backend(b),
            TrackError::WorkerPool(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownDomain(_) => CliError::Config(e.to_string()),
            EvalError::MissingDiagnostics { .. } => CliError::Config(format!(
                "{e}; pass the tracker's diagnostics file with --diagnostics"
            )),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
