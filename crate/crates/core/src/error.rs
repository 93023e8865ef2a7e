use std::fmt;

use thiserror::Error;

/// One field-level problem found while validating a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", join(.0))]
    Validation(Vec<Issue>),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cannot parse TOML: {0}")]
    TomlParse(#[from] toml::de::Error),
    #[error("cannot write TOML: {0}")]
    TomlWrite(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
