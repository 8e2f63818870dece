//! Std companion to `sslhop-core`: on-disk formats for deformation fields,
//! dataset manifests and fitted models, a deterministic synthetic dataset
//! generator, config loading and report writers used by the `sslhop` CLI.

pub mod config;
pub mod dataset;
pub mod error;
pub mod field_file;
pub mod manifest;
pub mod model_file;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
