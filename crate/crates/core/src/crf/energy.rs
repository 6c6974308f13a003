use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelId;
use crate::classify::UnaryField;
use crate::error::{Error, Result};
use crate::imageio::MultiChannelImage;

/// Posteriors are clamped to this range before taking `-log`.
pub const PROB_CLAMP: (f64, f64) = (1e-9, 1.0 - 1e-9);

/// `beta` used when an image has no contrast at all.
pub const BETA_MAX: f64 = 1e6;

/// Fixed-point scale for exact energy arithmetic: `2^20`.
pub const FIXED_SCALE: f64 = (1u64 << 20) as f64;

/// Which pixel values drive the contrast-sensitive Potts term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairwiseMode {
    #[serde(rename = "VIS")]
    Vis,
    #[serde(rename = "NIR")]
    Nir,
    #[serde(rename = "VIS_NIR")]
    VisNir,
}

impl PairwiseMode {
    pub fn channels(self) -> &'static [ChannelId] {
        match self {
            PairwiseMode::Vis => &[ChannelId::R, ChannelId::G, ChannelId::B],
            PairwiseMode::Nir => &[ChannelId::Nir],
            PairwiseMode::VisNir => &[ChannelId::R, ChannelId::G, ChannelId::B, ChannelId::Nir],
        }
    }
}

impl fmt::Display for PairwiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairwiseMode::Vis => "VIS",
            PairwiseMode::Nir => "NIR",
            PairwiseMode::VisNir => "VIS_NIR",
        })
    }
}

impl std::str::FromStr for PairwiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('+', "_").as_str() {
            "VIS" => Ok(PairwiseMode::Vis),
            "NIR" => Ok(PairwiseMode::Nir),
            "VIS_NIR" => Ok(PairwiseMode::VisNir),
            _ => Err(Error::InvalidParameter(format!("unknown pairwise mode `{s}`"))),
        }
    }
}

/// A per-pixel label assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl Labeling {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "labeling of {width}x{height} given {} labels",
                labels.len()
            )));
        }
        Ok(Labeling {
            width,
            height,
            labels,
        })
    }

    pub fn uniform(width: usize, height: usize, label: u8) -> Self {
        Labeling {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    /// Count of 4-neighbor pairs carrying different labels.
    pub fn disagreeing_pairs(&self) -> usize {
        let (w, h) = (self.width, self.height);
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                if x + 1 < w && self.labels[y * w + x + 1] != l {
                    n += 1;
                }
                if y + 1 < h && self.labels[(y + 1) * w + x] != l {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Per-pixel contrast vectors `q_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastImage {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl ContrastImage {
    pub fn from_image(img: &MultiChannelImage, mode: PairwiseMode) -> Result<Self> {
        let planes = mode
            .channels()
            .iter()
            .map(|&c| img.channel(c))
            .collect::<Result<Vec<_>>>()?;
        let n = img.width() * img.height();
        let mut values = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            values.extend(planes.iter().map(|p| p.data()[i]));
        }
        Ok(ContrastImage {
            width: img.width(),
            height: img.height(),
            dim: planes.len(),
            values,
        })
    }

    fn q(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn squared_difference(&self, a: usize, b: usize) -> f64 {
        self.q(a)
            .iter()
            .zip(self.q(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    /// `1 / (2 <|q_i - q_j|^2>)` averaged over 4-neighbor edges, or
    /// [`BETA_MAX`] when there is no contrast (or no edge).
    pub fn beta(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for_each_edge(self.width, self.height, |a, b| {
            sum += self.squared_difference(a, b);
            count += 1;
        });
        if count == 0 || sum == 0.0 {
            BETA_MAX
        } else {
            1.0 / (2.0 * sum / count as f64)
        }
    }
}

/// Calls `f(i, j)` for every undirected 4-neighbor edge once: right
/// neighbors first, then down neighbors, in row-major order.
pub(crate) fn for_each_edge(width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                f(i, i + 1);
            }
            if y + 1 < height {
                f(i, i + width);
            }
        }
    }
}

pub fn estimate_beta(img: &MultiChannelImage, mode: PairwiseMode) -> Result<f64> {
    Ok(ContrastImage::from_image(img, mode)?.beta())
}

fn to_fixed(value: f64) -> i64 {
    (value * FIXED_SCALE).round() as i64
}

/// The Gibbs energy `sum_i psi_i(x_i) + lambda sum_(i,j) psi_ij(x_i, x_j)`
/// on a 4-connected grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    pub width: usize,
    pub height: usize,
    pub num_labels: usize,
    /// `psi_i(k) = -log P(X_i = k | D)`, pixel-major.
    pub unary: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    /// `exp(-beta |q_i - q_j|^2)` for the edge to the right neighbor.
    right: Vec<f64>,
    /// Same for the edge to the neighbor below.
    down: Vec<f64>,
    unary_fixed: Vec<i64>,
    right_fixed: Vec<i64>,
    down_fixed: Vec<i64>,
}

impl EnergyModel {
    /// Builds the model from posteriors and contrast vectors, reusing a
    /// precomputed `beta`.
    pub fn with_beta(
        field: &UnaryField,
        contrast: &ContrastImage,
        lambda: f64,
        beta: f64,
    ) -> Result<Self> {
        if (field.width, field.height) != (contrast.width, contrast.height) {
            return Err(Error::ShapeMismatch(format!(
                "unaries are {}x{} but contrast is {}x{}",
                field.width, field.height, contrast.width, contrast.height
            )));
        }
        if !(lambda >= 0.0) || !(beta > 0.0) {
            return Err(Error::NonMetricPairwise);
        }
        let unary: Vec<f64> = field
            .probs
            .iter()
            .map(|p| -p.clamp(PROB_CLAMP.0, PROB_CLAMP.1).ln())
            .collect();
        let (w, h) = (field.width, field.height);
        let mut right = vec![0.0; w * h];
        let mut down = vec![0.0; w * h];
        for_each_edge(w, h, |a, b| {
            let weight = (-beta * contrast.squared_difference(a, b)).exp();
            if b == a + 1 {
                right[a] = weight;
            } else {
                down[a] = weight;
            }
        });
        Ok(Self::from_parts(w, h, field.num_labels(), unary, lambda, beta, right, down))
    }

    pub fn new(field: &UnaryField, contrast: &ContrastImage, lambda: f64) -> Result<Self> {
        Self::with_beta(field, contrast, lambda, contrast.beta())
    }

    /// Assembles a model from unary energies and per-edge contrast weights
    /// (`right[i]` joins `i` and `i + 1`, `down[i]` joins `i` and `i + width`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        width: usize,
        height: usize,
        num_labels: usize,
        unary: Vec<f64>,
        lambda: f64,
        beta: f64,
        right: Vec<f64>,
        down: Vec<f64>,
    ) -> Self {
        let unary_fixed = unary.iter().map(|&u| to_fixed(u)).collect();
        let right_fixed = right.iter().map(|&c| to_fixed(lambda * c)).collect();
        let down_fixed = down.iter().map(|&c| to_fixed(lambda * c)).collect();
        EnergyModel {
            width,
            height,
            num_labels,
            unary,
            lambda,
            beta,
            right,
            down,
            unary_fixed,
            right_fixed,
            down_fixed,
        }
    }

    fn edge_weight(&self, i: usize, j: usize) -> Option<f64> {
        let (lo, hi) = (i.min(j), i.max(j));
        if hi == lo + 1 && lo % self.width + 1 < self.width {
            Some(self.right[lo])
        } else if hi == lo + self.width {
            Some(self.down[lo])
        } else {
            None
        }
    }

    /// Unweighted Potts term `[x_i != x_j] exp(-beta |q_i - q_j|^2)`.
    pub fn pairwise_potential(&self, i: usize, j: usize, xi: u8, xj: u8) -> Result<f64> {
        let weight = self
            .edge_weight(i, j)
            .ok_or_else(|| Error::ShapeMismatch(format!("pixels {i} and {j} are not neighbors")))?;
        Ok(if xi == xj { 0.0 } else { weight })
    }

    fn check(&self, x: &Labeling) -> Result<()> {
        if (x.width, x.height) != (self.width, self.height) {
            return Err(Error::ShapeMismatch(format!(
                "labeling is {}x{}, model is {}x{}",
                x.width, x.height, self.width, self.height
            )));
        }
        if let Some(&bad) = x.labels.iter().find(|&&l| l as usize >= self.num_labels) {
            return Err(Error::ShapeMismatch(format!(
                "label {bad} outside the {}-label model",
                self.num_labels
            )));
        }
        Ok(())
    }

    pub fn total_energy(&self, x: &Labeling) -> Result<f64> {
        self.check(x)?;
        let l = self.num_labels;
        let unary: f64 = x
            .labels
            .iter()
            .enumerate()
            .map(|(i, &k)| self.unary[i * l + k as usize])
            .sum();
        let mut pair = 0.0;
        for_each_edge(self.width, self.height, |a, b| {
            if x.labels[a] != x.labels[b] {
                pair += if b == a + 1 { self.right[a] } else { self.down[a] };
            }
        });
        Ok(unary + self.lambda * pair)
    }

    /// Energy in fixed-point units of `2^-20`, used for exact comparisons.
    pub fn total_energy_fixed(&self, x: &Labeling) -> Result<i64> {
        self.check(x)?;
        Ok(self.fixed_energy_unchecked(&x.labels))
    }

    pub(crate) fn fixed_energy_unchecked(&self, labels: &[u8]) -> i64 {
        let l = self.num_labels;
        let mut e: i64 = labels
            .iter()
            .enumerate()
            .map(|(i, &k)| self.unary_fixed[i * l + k as usize])
            .sum();
        for_each_edge(self.width, self.height, |a, b| {
            if labels[a] != labels[b] {
                e += if b == a + 1 { self.right_fixed[a] } else { self.down_fixed[a] };
            }
        });
        e
    }

    #[inline]
    pub(crate) fn unary_fixed(&self, pixel: usize, label: usize) -> i64 {
        self.unary_fixed[pixel * self.num_labels + label]
    }

    #[inline]
    pub(crate) fn right_fixed(&self, pixel: usize) -> i64 {
        self.right_fixed[pixel]
    }

    #[inline]
    pub(crate) fn down_fixed(&self, pixel: usize) -> i64 {
        self.down_fixed[pixel]
    }

    /// Per-pixel minimum-unary labeling. Ties go to the lowest label,
    /// matching [`UnaryField::argmax`] on the clamped posteriors.
    pub fn unary_argmin(&self) -> Labeling {
        let l = self.num_labels;
        let labels = (0..self.width * self.height)
            .map(|i| {
                let row = &self.unary[i * l..(i + 1) * l];
                let mut best = 0;
                for k in 1..l {
                    if row[k] < row[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        Labeling {
            width: self.width,
            height: self.height,
            labels,
        }
    }
}
