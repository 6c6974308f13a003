//! Semantic segmentation of RGB+NIR images.
//!
//! Dense multi-scale patches are described with SIFT or color statistics over
//! configurable channel sets, encoded as Fisher vectors, scored by one-vs-all
//! sparse logistic regression and smoothed with a contrast-sensitive Potts
//! CRF solved by alpha-expansion.

pub mod channels;
pub mod classify;
pub mod crf;
pub mod descriptors;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod imageio;
mod linalg;
pub mod patches;
pub mod pipeline;

pub use error::{Error, Result};
