//! Exit-code discipline: 0 success, 1 usage, 2 data error, 3 inference
//! failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Inference(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Inference(_) => 3,
        }
    }

    pub fn data(err: impl Into<anyhow::Error>) -> Self {
        CliError::Data(err.into())
    }

    pub fn data_msg(msg: impl Into<String>) -> Self {
        CliError::Data(anyhow::anyhow!(msg.into()))
    }

    pub fn inference(err: impl Into<anyhow::Error>) -> Self {
        CliError::Inference(err.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(err) => write!(f, "data error: {err:#}"),
            CliError::Inference(err) => write!(f, "inference failure: {err:#}"),
        }
    }
}

impl std::error::Error for CliError {}
