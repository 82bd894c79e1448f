//! Library surface of the scenario runner, used by the binary and by the
//! acceptance suite.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_convergence, cmd_oracle_check, cmd_regularity, cmd_residual, cmd_simulate, CliError,
};
pub use config::{LoadedConfig, RunConfig};
