//! Experiment driver for the learner in `msacl-core`: run configuration,
//! checkpoints, CSV/JSON reports and the subcommands behind the `msacl` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use error::{LabError, Result};
