//! Command failures and their process exit codes.

use metctl_core::reinforce::{EpisodeError, TrainError};
use metctl_core::EnvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Simulation or training broke down numerically (exit code 3).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A required input file is absent (exit code 4).
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    /// Writing an output failed (exit code 1).
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::MissingArtifact(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn from_env(e: EnvError) -> Self {
        match e {
            EnvError::Sim(_) | EnvError::IncompleteTrajectory { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }

    pub fn from_episode(e: EpisodeError<EnvError>) -> Self {
        match e {
            EpisodeError::Env(e) => Self::from_env(e),
            EpisodeError::Policy(e) => CliError::Config(e.to_string()),
        }
    }

    pub fn from_train(e: TrainError<EnvError>) -> Self {
        match e {
            TrainError::InvalidConfig(m) => CliError::Config(m),
            TrainError::Episode { epoch, episode, source } => match Self::from_episode(source) {
                CliError::Numerical(m) => CliError::Numerical(format!("epoch {epoch}, episode {episode}: {m}")),
                other => other,
            },
            TrainError::NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            TrainError::WorkerPool(m) => CliError::Io(m),
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}
