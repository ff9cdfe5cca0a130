//! Experiment runner for representation regularizers: λ selection on a
//! validation split, repeated seeded runs, layer-placement sweeps, and
//! CSV/JSON export of representation analyses.

pub mod analysis;
pub mod cli;
pub mod config;
mod error;
pub mod experiment;
pub mod output;
pub mod reports;

pub use config::{ExperimentConfig, Task};
pub use error::CliError;
