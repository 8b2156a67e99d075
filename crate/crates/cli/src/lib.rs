//! Configuration-driven driver for ocflow experiments and verification
//! suites.

pub mod config;
pub mod experiment;
pub mod sweep;

pub use config::{Config, ConfigError};
pub use experiment::{run_experiment, CliError, OutputPaths, RunReportFile};
