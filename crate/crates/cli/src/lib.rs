//! Experiment runner behind the `kdpp` binary.
//!
//! Each subcommand is a thin wrapper over a function in [`experiments`]
//! that returns a report; the reports write the CSV files and carry the
//! acceptance checks used by `--check`.

pub mod config;
pub mod experiments;

pub use config::{RunConfig, Source, SpectrumKind};
