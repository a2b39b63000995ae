//! Experiment driver: configs in, CSV and plot data out.

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 config error, 3 feasibility refusal, 4 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Prefixes runtime failures with where they happened.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
            other => other,
        }
    }
}

impl From<coopmarl_core::Error> for CliError {
    fn from(e: coopmarl_core::Error) -> Self {
        match e {
            coopmarl_core::Error::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
