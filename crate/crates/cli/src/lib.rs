//! Library side of the `consensus` command-line tool.
//!
//! Exit codes: 0 success, 1 config/usage/I-O error, 2 Riccati failure,
//! 3 topology or protocol validation failure, 4 blow-up in at least one path.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::path::Path;

use consensus_core::riccati::RiccatiError;
use consensus_core::sim::SimError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("Riccati solver failed: {0}")]
    Sare(#[from] RiccatiError),
    #[error("topology requirement not met:\n{0}")]
    Topology(String),
    #[error("protocol validation failed (rerun with --force to override):\n{0}")]
    Validation(String),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("{count} path(s) blew up; partial outputs in {dir}")]
    Blowup { count: usize, dir: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) | Self::Io { .. } | Self::Sim(_) => 1,
            Self::Sare(_) => 2,
            Self::Topology(_) | Self::Validation(_) => 3,
            Self::Blowup { .. } => 4,
        }
    }
}
