// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use lifsnn::encoding::{EncodingError, PgmError};
use lifsnn::fixedpoint::FixedPointError;
use lifsnn::hwmodel::HwError;
use lifsnn::network::NetworkError;
use lifsnn::trainer::TrainError;
use thiserror::Error;

/// Exit code 1.
pub const EXIT_USAGE: i32 = 1;
/// Exit code 2.
pub const EXIT_DATA: i32 = 2;
/// Exit code 3.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Data { .. } | CliError::Invalid(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, message: impl ToString) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::NonFinite(_)
            | NetworkError::FixedPoint(FixedPointError::NonFinite(_)) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<HwError> for CliError {
    fn from(e: HwError) -> Self {
        match e {
            HwError::Network(n) => n.into(),
            HwError::InvalidMetric(m) => CliError::Usage(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<EncodingError> for CliError {
    fn from(e: EncodingError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
            TrainError::Config(m) => CliError::Usage(m),
            TrainError::Network(n) => n.into(),
            TrainError::Hw(h) => h.into(),
            TrainError::Encoding(x) => x.into(),
        }
    }
}
