//! File formats, synthetic data generation, and split handling around
//! `pirt-core`.
//!
//! This crate owns everything that touches the filesystem: the binary token
//! feature format (magic `PIRTFEA1`) with its CSV fallback, the training
//! checkpoint format (magic `PIRTCKP1`), split manifests, and the CSV reports
//! the CLI writes. The `pirt` binary wires these around the core training and
//! evaluation routines.

pub mod checkpoint;
pub mod error;
pub mod features;
pub mod report;
pub mod splits;
pub mod synthetic;

pub use error::{Error, Result};
