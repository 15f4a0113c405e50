use std::path::Path;

use thiserror::Error;

use l2lab::checkpoint::CheckpointError;
use l2lab::curriculum::CurriculumError;
use l2lab::eval::EvalError;
use l2lab::experiment::ExperimentError;
use l2lab::model::ModelError;
use l2lab::report::ReportError;
use l2lab::stats::StatsError;
use l2lab::tokenizer::TokenizerError;

/// Failures split by exit status: bad input (2) or failure while running (1).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<CurriculumError> for CliError {
    fn from(e: CurriculumError) -> Self {
        match e {
            CurriculumError::Config(_)
            | CurriculumError::Regime(_)
            | CurriculumError::TooSmall(_)
            | CurriculumError::Misaligned { .. }
            | CurriculumError::EmptyLine { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::Shrink { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Curriculum(e) => e.into(),
            ExperimentError::Model(e) => e.into(),
            ExperimentError::Tokenizer(e) => e.into(),
            ExperimentError::Eval(e) => e.into(),
        }
    }
}

macro_rules! config_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Config(e.to_string())
            }
        }
    )*};
}

config_error!(TokenizerError, EvalError, ReportError, StatsError);

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
