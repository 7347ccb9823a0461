//! Batch front end for DMRG ground-state runs: a flat config file in, TSV
//! measurement files and a short report out.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, ConfigError, InitialState, ModelTag, RunConfig};
pub use run::{run, run_path, Overrides, RunError, RunSummary};
