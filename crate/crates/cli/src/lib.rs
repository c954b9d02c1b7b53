//! Command implementations behind the `epifit` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;

pub use args::{Cli, Command};
pub use commands::run;
pub use error::{CliError, CliResult};
