//! Reproducible runner for the bdf-core solver: JSON configuration, one
//! subcommand per run, CSV/JSON artifacts and a hashed manifest.

pub mod config;
pub mod manifest;
pub mod runner;

pub use config::{ConfigError, RunConfig, SCHEMA_VERSION};
pub use runner::{run, RunOptions, Subcommand};
