//! Standard-library side of the methane mapping pipeline.
//!
//! [`methanemapper_core`] holds the algorithms and never touches a file.
//! This crate supplies positioned file reads for cubes, ENVI and PNG
//! writers, versioned sidecars, the `key = value` configuration, a seeded
//! synthetic scene generator and one function per command-line subcommand.

pub mod config;
pub mod error;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod records;
pub mod sidecar;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{AppError, Result};

/// Identity of the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}
