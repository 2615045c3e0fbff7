//! File-level driver for the `cems` sampler: CSV ingestion and export,
//! config files, and the subcommands behind the `cems` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use cli::Cli;
pub use commands::run;
pub use error::CliError;
