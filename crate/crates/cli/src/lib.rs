//! Experiment runner: configs, training and evaluation runs, self-checks,
//! model files and plots.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod run;
pub mod svg;
pub mod verify;

pub use config::RunConfig;
pub use error::CliError;
