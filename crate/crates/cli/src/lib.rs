//! Orchestration behind the `casper` binary: benchmark configs, multi-seed
//! training with aggregate summaries, cross-run analysis and the gradient
//! check.

pub mod analyze;
pub mod config;
pub mod error;
pub mod train;

pub use error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CASPER_OUT";
