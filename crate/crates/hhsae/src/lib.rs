//! File formats, run directories and the pipeline driver behind the `hhsae`
//! binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod run_dir;

pub use error::{CliError, Result};
