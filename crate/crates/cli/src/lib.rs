//! Experiment harness: configuration, the split/job runner and subcommands.

pub mod commands;
pub mod config;
pub mod runner;

pub use commands::{cmd_ablate, cmd_stats, cmd_sweep, cmd_train, Outcome, RunOptions};
pub use config::ExperimentConfig;
