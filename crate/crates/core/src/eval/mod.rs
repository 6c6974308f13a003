//! Segmentation quality measures.

mod confusion;
mod trimap;
mod ttest;

pub use confusion::{accumulate_confusion, confusion_size, ClassScores, ConfusionMatrix};
pub use trimap::{boundary_distance, trimap_curve, TrimapCurve};
pub use ttest::{paired_t_test, regularized_incomplete_beta, student_t_cdf, TTest};
