//! Patch classification and pixel-level posteriors.

mod bundle;
mod posterior;
mod slr;

pub use bundle::{ModelBundle, Seeds, StreamModel, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use posterior::{aggregate_pixel_posteriors, apply_background_rule, late_fuse, UnaryField};
pub use slr::{
    patch_probability, sigmoid, train_slr, train_slr_with_trace, HeadTrace, LinearClassifier,
    SlrParams,
};
