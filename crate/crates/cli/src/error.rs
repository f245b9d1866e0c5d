//! Error taxonomy of the runner. Each class owns a distinct process exit code so
//! scripts can branch on failures without parsing messages.

use std::fmt;

/// Runner-level failure; the variant decides the exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// The config file could not be read or parsed (exit 2).
    Config(String),
    /// The requested scenario is not in the registry (exit 3).
    UnknownScenario(String),
    /// The config parsed but its values are unusable (exit 4).
    Validation(String),
    /// The experiment itself failed (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::UnknownScenario(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::UnknownScenario(name) => write!(f, "unknown scenario: {name}"),
            CliError::Validation(msg) => write!(f, "invalid config: {msg}"),
            CliError::Runtime(msg) => write!(f, "run failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cylevy::Error> for CliError {
    fn from(e: cylevy::Error) -> Self {
        CliError::Runtime(format!("{e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("{e}"))
    }
}
