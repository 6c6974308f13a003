//! Descriptor projection, GMM codebook and Fisher vector encoding.

mod fisher;
mod gmm;
mod pca;

pub use fisher::{fisher_vector, FisherEncoder, FisherVector, DEFAULT_MIN_POSTERIOR};
pub use gmm::{fit_gmm, GmmCodebook, GmmFit, GmmParams, DEFAULT_COMPONENTS, DEFAULT_VARIANCE_FLOOR};
pub use pca::{fit_descriptor_pca, DescriptorPca};

/// Every descriptor stream is projected to this many dimensions.
pub const PROJECTED_DIM: usize = 96;

/// Size of a Fisher vector for the default codebook: `2 * 96 * 128`.
pub const FISHER_DIM: usize = 2 * PROJECTED_DIM * DEFAULT_COMPONENTS;
