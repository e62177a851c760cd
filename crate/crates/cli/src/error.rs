use std::fmt;

use tdtlab::corpus::CorpusError;
use tdtlab::decode::DecodeError;
use tdtlab::eval::EvalError;
use tdtlab::lattice::LatticeError;
use tdtlab::model::ModelError;

/// Process exit status of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    InputData = 2,
    Verification = 3,
    Numerical = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self { code: ExitCode::Usage, error: e.into() }
    }

    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        Self { code: ExitCode::InputData, error: e.into() }
    }

    pub fn verification(msg: impl Into<String>) -> Self {
        Self { code: ExitCode::Verification, error: anyhow::anyhow!(msg.into()) }
    }

    pub fn numerical(e: impl Into<anyhow::Error>) -> Self {
        Self { code: ExitCode::Numerical, error: e.into() }
    }

    pub fn context(mut self, what: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(what);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::input(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::input(e)
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        Self::input(e)
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::NonFinite(_) => Self::numerical(e),
            other => Self::input(other),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite(_) | ModelError::Lattice(LatticeError::NonFinite(_)) => Self::numerical(e),
            ModelError::Config(_) => Self::usage(e),
            other => Self::input(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
