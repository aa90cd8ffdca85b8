//! Configuration, pipelines and file output behind the `nmwalk` binary.

pub mod config;
pub mod csv;
pub mod error;
pub mod pipelines;

pub use config::{parse_config, ExperimentConfig};
pub use error::CliError;
