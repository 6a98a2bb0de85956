//! Experiment runner for the `lgrad` command-line tool: config parsing, the
//! grid runner, timing benchmarks, dataset generation and channel montages.

pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod generate;
pub mod montage;
pub mod output;
pub mod runner;
pub mod seeds;

pub use config::{ExperimentConfig, Method};
pub use error::CliError;
pub use runner::{run_experiment, PointFilter, RunOptions, RunOutcome};
