//! Command-line companion to `hqrec-core`: file formats, run configuration,
//! checkpoints, reports, and the retrieval benchmark.

pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod formats;
pub mod reports;
pub mod synth;

use std::fmt::Display;

/// Process-level failure classes, mapped to exit codes by the binary.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, unreadable input, or malformed files — exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Training or scoring produced non-finite numbers — exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<formats::FormatError> for CliError {
    fn from(e: formats::FormatError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<hqrec_core::graph::GraphError> for CliError {
    fn from(e: hqrec_core::graph::GraphError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<hqrec_core::trainer::TrainError> for CliError {
    fn from(e: hqrec_core::trainer::TrainError) -> Self {
        match e {
            hqrec_core::trainer::TrainError::Divergence { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}
