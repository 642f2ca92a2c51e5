//! Configuration-driven experiment runner for `mqplab-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod setup;
pub mod validate;

pub use commands::{run_command, Command, Run};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use error::CliError;
pub use report::{read_report, write_report, Check, RunReport, Status, Table, Timing, REPORT_SCHEMA};
