//! Experiment orchestration for the cooperative synchronization library:
//! configuration, seeded Monte Carlo runs, figure presets, result tables
//! and the built-in oracle suite.

pub mod config;
pub mod output;
pub mod runner;
pub mod scenarios;
pub mod selftest;

pub use config::{ExperimentConfig, Mode};
pub use runner::{run_experiment, RunOutput};
pub use scenarios::Scenario;
