//! Batch pipeline around `otfair-core`: CSV in, fair scores and JSON
//! fairness reports out.

pub mod commands;
pub mod config;
pub mod error;
pub mod json;
pub mod table;

pub use config::{FileConfig, Overrides, RunConfig};
pub use error::{CliError, Result};
