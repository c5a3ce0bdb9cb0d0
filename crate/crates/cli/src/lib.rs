//! Command-line pipeline around the `maintien` library.

pub mod args;
pub mod commands;
pub mod config;
pub mod export;
pub mod failure;
pub mod pipeline;

pub use commands::run;
pub use config::PipelineConfig;
pub use failure::{Failure, FailureKind};
pub use pipeline::{run_pipeline, Manifest};
