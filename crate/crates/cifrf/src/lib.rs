//! File formats and the `cifrf` command-line driver around `cifrf-core`.

pub mod commands;
pub mod error;
pub mod io;
pub mod model;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
