//! Command implementations behind the `sqa` binary.

pub mod commands;
pub mod config;
pub mod scores;

use std::fmt;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, configuration or undefined statistics. Exit code 1.
    Input(anyhow::Error),
    /// The segmentation backend failed. Exit code 2.
    Backend(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Backend(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) | Failure::Backend(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for Failure {}
