//! Contrast-sensitive Potts CRF and its alpha-expansion solver.

mod energy;
mod expansion;
mod maxflow;

pub use energy::{
    estimate_beta, ContrastImage, EnergyModel, Labeling, PairwiseMode, BETA_MAX, FIXED_SCALE,
    PROB_CLAMP,
};
pub use expansion::{alpha_expansion, alpha_expansion_from, ExpansionResult, MAX_SWEEPS};
pub use maxflow::FlowGraph;
