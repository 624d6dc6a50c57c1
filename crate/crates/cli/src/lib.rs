//! Config-driven experiment runner for `csi_sched`: scenario parsing and the
//! `region`, `plan`, `simulate` and `lil` subcommands.

pub mod commands;
pub mod config;

pub use commands::Artifacts;
pub use config::{Overrides, ScenarioConfig};
