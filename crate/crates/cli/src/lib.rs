//! Config-driven front end: data generation, source pretraining,
//! adaptation, and evaluation.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_adapt, cmd_adapt_with_progress, cmd_eval, cmd_gen_data, cmd_pretrain};
pub use config::{ExperimentConfig, Overrides, RawConfig, RESOLVED_CONFIG};
pub use error::CliError;
