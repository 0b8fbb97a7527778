//! Experiment harness for the tempered-VB estimators: configuration,
//! seeded dataset generation, bound-vs-empirical comparison and report
//! persistence. The `tempered-vb` binary is a thin CLI over this library.

pub mod config;
pub mod harness;
pub mod mixture;
pub mod report;
pub mod seeds;

pub use config::{ExperimentConfig, ExperimentKind};
pub use harness::{run_experiment, RunContext};
pub use report::RunReport;

use thiserror::Error;

/// Harness errors, mapped onto CLI exit codes 1 (invariant), 2 (config)
/// and 3 (I/O).
#[derive(Debug, Error)]
pub enum ExpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl ExpError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Invariant(_) => 1,
            ExpError::Config(_) => 2,
            ExpError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for ExpError {
    fn from(e: std::io::Error) -> Self {
        ExpError::Io(e.to_string())
    }
}

impl From<tempered_vb_core::Error> for ExpError {
    fn from(e: tempered_vb_core::Error) -> Self {
        match e {
            tempered_vb_core::Error::InvalidParameter { name, reason } => {
                ExpError::Config(format!("{name}: {reason}"))
            }
            other => ExpError::Invariant(other.to_string()),
        }
    }
}

pub type ExpResult<T> = std::result::Result<T, ExpError>;
