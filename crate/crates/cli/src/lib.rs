//! File formats, plotting, and command frontends for the
//! factor-diffusion portfolio pipeline.
//!
//! The binary (`factordiff`) is a thin wrapper over [`commands`]; the
//! library surface exists so integration tests can drive the exact
//! command implementations in-process.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod svg;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
