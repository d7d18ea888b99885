//! Command-line front end: feature bundles, WAV I/O and the subcommands.

pub mod args;
pub mod audio;
pub mod bundle;
pub mod commands;
pub mod error;

pub use args::Cli;
pub use bundle::FeatureBundle;
pub use commands::run;
pub use error::{CliError, Result};
