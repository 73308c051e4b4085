//! File formats, experiment configs and the `protolatent` command line
//! around `protolatent-core`.

pub mod binfmt;
pub mod commands;
pub mod config;
pub mod dsfile;
pub mod error;
pub mod files;
pub mod netfile;
pub mod par;
pub mod report;
pub mod text;

pub use error::{CliError, Result};
