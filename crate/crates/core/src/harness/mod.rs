//! Command-line harness: JSON run configuration, the four subcommands and
//! their table, plot and JSON outputs.

pub mod cli;
pub mod commands;
pub mod config;
pub mod plot;
pub mod table;

pub use cli::{exit_code, run, Cli};
pub use config::RunConfig;
pub use table::ResultTable;
