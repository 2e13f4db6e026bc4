//! Batch front end for `qcga`: job configuration, the five commands and
//! their report formats.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<qcga::Error> for CliError {
    fn from(e: qcga::Error) -> Self {
        match e {
            qcga::Error::Parse { .. } | qcga::Error::UnsupportedRule(_) => CliError::Parse(e.to_string()),
            qcga::Error::InvalidArgument(_) | qcga::Error::InfeasibleAssay(_) => CliError::Runtime(e.to_string()),
        }
    }
}
