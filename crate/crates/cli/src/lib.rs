//! Command-line harness for IMLP stream experiments: dataset preparation,
//! multi-seed runs with reproducible reports, scoring, Pareto fronts and
//! rank statistics.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

pub use error::{CliError, CliResult};
