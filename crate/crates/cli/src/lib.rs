//! Reproducibility shell around `abr-core`: run configs, per-seed output
//! directories, sweeps and their aggregation. The `abr` binary is a thin
//! argument parser over these functions.

pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;
pub mod train;

pub use config::{RunConfig, OUT_DIR_VAR};
pub use error::{CliError, CliResult};
