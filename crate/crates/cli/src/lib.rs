//! Experiment driver for the mscrf segmentation pipeline: configuration,
//! five-fold protocol, unary cache, reports and comparisons.

pub mod cache;
pub mod compare;
pub mod config;
pub mod error;
pub mod plot;
pub mod protocol;
pub mod report;
pub mod synth;

pub use error::{CliError, CliResult};
