//! Batch experiment runner for the DMA energy-efficiency library.
//!
//! Loads a TOML experiment description, expands the configured sweep into a
//! seeded scenario grid, drives the optimizers from `dma-ee-core`, and
//! writes machine-readable CSV. Identical configs produce byte-identical
//! output.

pub mod config;
pub mod csvio;
pub mod report;
pub mod runner;

use thiserror::Error;

/// Harness-level failures, split by where they surface.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The experiment file is invalid; the message names the field.
    #[error("config error: {0}")]
    Config(String),
    /// A scenario failed while running.
    #[error("scenario error: {0}")]
    Scenario(String),
    /// Reading or writing results failed.
    #[error("io error: {0}")]
    Io(String),
}
