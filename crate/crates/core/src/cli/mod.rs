//! Configuration, replica orchestration and the command-line entry points.

pub mod config;
pub mod runner;

pub use config::{parse_config, RunConfig};
pub use runner::{
    analyze_command, invert_command, oracle_command, replica_seed, run_command, RunOutcome,
};
