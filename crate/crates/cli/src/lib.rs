//! Experiment runner for the `qkd-core` simulator: seeded runs, parameter
//! sweeps and the acceptance suite.

use std::path::{Path, PathBuf};

pub mod acceptance;
pub mod app;
pub mod config;
pub mod runner;
pub mod sweep;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] qkd_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
