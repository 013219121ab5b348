//! Experiment orchestration for the knockoff feature-selection toolkit:
//! configuration documents and named presets, seeded multi-trial runners,
//! and result persistence. The `grip` binary exposes this as subcommands.

use thiserror::Error;

pub mod config;
pub mod pipeline;
pub mod report;

/// Harness-level failures: configuration problems, I/O, or a wrapped core
/// error with trial context.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] grip_core::Error),
}
