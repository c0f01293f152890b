//! Experiment runner for tilt-based certification of Fermi-Hubbard
//! simulators.
//!
//! A TOML [`ExperimentConfig`] names one experiment (`spectrum`, `sweep`,
//! `evolve`, `lindblad` or `certify`). [`validate_config`] checks it without
//! running physics, and [`run_config`] executes it and writes CSV tables
//! whose `#` header echoes the config, the code version and the seed.
#![warn(missing_debug_implementations)]

pub mod config;
pub mod output;
pub mod plan_file;
pub mod run;

pub use config::{validate_config, Experiment, ExperimentConfig, GridSpec, ValidationError};
pub use output::{format_number, read_table, Metadata, OutputError, ReadTable, Table};
pub use plan_file::PlanDocument;
pub use run::{run_config, RunError, RunOptions, RunReport};
