use skillrank_core::judge::JudgeError;
use skillrank_core::monitor::MonitorError;
use skillrank_core::scoring::{CorrelationError, ScoringError};
use skillrank_core::supervision::SupervisionError;
use skillrank_core::tournament::TournamentError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_JUDGE: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("judge error: {0}")]
    Judge(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => EXIT_CONFIG,
            Self::Input(_) | Self::Io { .. } => EXIT_INPUT,
            Self::Judge(_) => EXIT_JUDGE,
        }
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::InvalidConfig(reason) => Self::config("judge", reason),
            JudgeError::UnknownPlayer(id) => {
                Self::config("judge.oracle.latent_quality", format!("no quality for `{id}`"))
            }
            JudgeError::ScriptExhausted(n) => {
                Self::config("judge.scripted.labels", format!("script exhausted after {n} verdicts"))
            }
            JudgeError::InvalidRequest(reason) => Self::Input(reason),
            other => Self::Judge(other.to_string()),
        }
    }
}

impl From<TournamentError> for CliError {
    fn from(e: TournamentError) -> Self {
        match e {
            TournamentError::Judge { source, .. } => source.into(),
            TournamentError::TooManyFailures { .. } => Self::Judge(e.to_string()),
            TournamentError::InvalidConfig { field, reason } => Self::config(format!("tournament.{field}"), reason),
            TournamentError::Rating(r) => Self::config("rating", r.to_string()),
            other => Self::Input(other.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::Judge { source, .. } => source.into(),
            ScoringError::Tournament(t) => t.into(),
            other => Self::Input(other.to_string()),
        }
    }
}

impl From<CorrelationError> for CliError {
    fn from(e: CorrelationError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<SupervisionError> for CliError {
    fn from(e: SupervisionError) -> Self {
        match e {
            SupervisionError::InvalidConfig { field, reason } => {
                Self::config(format!("weak_supervision.{field}"), reason)
            }
            other => Self::Input(other.to_string()),
        }
    }
}

impl From<MonitorError> for CliError {
    fn from(e: MonitorError) -> Self {
        match e {
            MonitorError::InvalidConfig { field, reason } => Self::config(format!("monitor.{field}"), reason),
            MonitorError::Judge(j) => j.into(),
            MonitorError::Tournament(t) => t.into(),
            other => Self::Input(other.to_string()),
        }
    }
}
