use serde::{Deserialize, Serialize};

use crate::crf::Labeling;
use crate::error::{Error, Result};
use crate::imageio::{LabelMask, Mode};

/// `counts[k][l]`: pixels with ground truth `k` predicted as `l`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

/// Per-class scores. `None` marks a class excluded from the average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub accuracy: Vec<Option<f64>>,
    pub jaccard: Vec<Option<f64>>,
}

impl ConfusionMatrix {
    pub fn zeros(size: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; size]; size],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|row| row.len() != n) {
            return Err(Error::ShapeMismatch("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Number of scored labels (classes plus background in indoor mode).
    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `G_k`: ground-truth pixels of class `k`.
    pub fn gt_total(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    /// `P_k`: pixels predicted as `k`.
    pub fn pred_total(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size() != self.size() {
            return Err(Error::ShapeMismatch(format!(
                "cannot add {0}x{0} and {1}x{1} confusion matrices",
                self.size(),
                other.size()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    fn non_empty(&self) -> Result<()> {
        if self.total() == 0 {
            Err(Error::EmptyMatrix)
        } else {
            Ok(())
        }
    }

    pub fn overall_accuracy(&self) -> Result<f64> {
        self.non_empty()?;
        let diag: u64 = (0..self.size()).map(|k| self.counts[k][k]).sum();
        Ok(diag as f64 / self.total() as f64)
    }

    pub fn class_scores(&self) -> Result<ClassScores> {
        self.non_empty()?;
        let n = self.size();
        let mut accuracy = Vec::with_capacity(n);
        let mut jaccard = Vec::with_capacity(n);
        for k in 0..n {
            let (c, g, p) = (self.counts[k][k], self.gt_total(k), self.pred_total(k));
            accuracy.push((g > 0).then(|| c as f64 / g as f64));
            jaccard.push((g + p > 0).then(|| c as f64 / (g + p - c) as f64));
        }
        Ok(ClassScores { accuracy, jaccard })
    }

    /// Mean per-class accuracy over classes present in the ground truth.
    pub fn class_accuracy(&self) -> Result<f64> {
        Ok(mean_present(&self.class_scores()?.accuracy))
    }

    /// Mean per-class intersection over union, skipping classes absent
    /// from both ground truth and prediction.
    pub fn jaccard_index(&self) -> Result<f64> {
        Ok(mean_present(&self.class_scores()?.jaccard))
    }
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    present.iter().sum::<f64>() / present.len() as f64
}

/// Scored label count for a dataset with `num_classes` classes.
pub fn confusion_size(num_classes: usize, mode: Mode) -> usize {
    match mode {
        Mode::OutdoorVoid => num_classes,
        Mode::IndoorBackground => num_classes + 1,
    }
}

/// Counts one prediction against its ground truth. Void pixels are skipped
/// in outdoor mode; indoor background is scored like any class.
pub fn accumulate_confusion(
    pred: &Labeling,
    gt: &LabelMask,
    num_classes: usize,
    mode: Mode,
) -> Result<ConfusionMatrix> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let size = confusion_size(num_classes, mode);
    let mut cm = ConfusionMatrix::zeros(size);
    for (i, (&p, &g)) in pred.labels.iter().zip(&gt.labels).enumerate() {
        if mode == Mode::OutdoorVoid && g == gt.void_id {
            continue;
        }
        for id in [p, g] {
            if id as usize >= size {
                return Err(Error::UnknownLabel {
                    id,
                    x: i % pred.width,
                    y: i / pred.width,
                });
            }
        }
        cm.counts[g as usize][p as usize] += 1;
    }
    Ok(cm)
}
