//! Fisher vector encoding with respect to a diagonal GMM.
//!
//! Component `k` owns the slice `[k * 2D, (k + 1) * 2D)`: first the `D`
//! mean-gradient entries, then the `D` variance-gradient entries. Components
//! whose posterior is below the pruning threshold contribute nothing, so most
//! per-patch vectors are sparse and stored as such.

use serde::{Deserialize, Serialize};

use super::gmm::GmmCodebook;
use crate::error::{Error, Result};

/// Posteriors below this are treated as zero when encoding.
pub const DEFAULT_MIN_POSTERIOR: f64 = 1e-4;

/// A sparse high-dimensional feature vector (indices strictly increasing).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FisherVector {
    pub fn from_dense(values: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut nz = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                nz.push(v);
            }
        }
        FisherVector {
            dim: values.len(),
            indices,
            values: nz,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Encoder state shared across patches.
pub struct FisherEncoder<'a> {
    gmm: &'a GmmCodebook,
    min_posterior: f64,
    posteriors: Box<dyn Fn(&[f64], &mut [f64]) + 'a>,
    inv_sigma: Vec<Vec<f64>>,
}

impl<'a> FisherEncoder<'a> {
    pub fn new(gmm: &'a GmmCodebook, min_posterior: f64) -> Self {
        FisherEncoder {
            gmm,
            min_posterior,
            posteriors: Box::new(gmm.posteriors_with()),
            inv_sigma: gmm
                .variances
                .iter()
                .map(|v| v.iter().map(|x| 1.0 / x.sqrt()).collect())
                .collect(),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.gmm.num_components() * self.gmm.dim()
    }

    /// Gradient blocks before power and L2 normalization, as
    /// `(component, 2D values)` pairs in component order.
    pub fn raw_blocks(&self, descriptors: &[&[f64]]) -> Result<Vec<(usize, Vec<f64>)>> {
        let (k, dim) = (self.gmm.num_components(), self.gmm.dim());
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; k];
        let mut post = vec![0.0; k];
        for x in descriptors {
            if x.len() != dim {
                return Err(Error::VectorDimension {
                    expected: dim,
                    actual: x.len(),
                });
            }
            (self.posteriors)(x, &mut post);
            for (j, &g) in post.iter().enumerate() {
                if g <= self.min_posterior || g == 0.0 {
                    continue;
                }
                let block = acc[j].get_or_insert_with(|| vec![0.0; 2 * dim]);
                let (mean_part, var_part) = block.split_at_mut(dim);
                for d in 0..dim {
                    let u = (x[d] - self.gmm.means[j][d]) * self.inv_sigma[j][d];
                    mean_part[d] += g * u;
                    var_part[d] += g * (u * u - 1.0);
                }
            }
        }
        let n = descriptors.len().max(1) as f64;
        Ok(acc
            .into_iter()
            .enumerate()
            .filter_map(|(j, block)| {
                let mut block = block?;
                let w = self.gmm.weights[j];
                let (mean_scale, var_scale) = (1.0 / (n * w.sqrt()), 1.0 / (n * (2.0 * w).sqrt()));
                let (m, v) = block.split_at_mut(dim);
                m.iter_mut().for_each(|x| *x *= mean_scale);
                v.iter_mut().for_each(|x| *x *= var_scale);
                Some((j, block))
            })
            .collect())
    }

    /// Unnormalized dense Fisher vector.
    pub fn raw(&self, descriptors: &[&[f64]]) -> Result<Vec<f64>> {
        let dim = self.gmm.dim();
        let mut out = vec![0.0; self.output_dim()];
        for (j, block) in self.raw_blocks(descriptors)? {
            out[j * 2 * dim..(j + 1) * 2 * dim].copy_from_slice(&block);
        }
        Ok(out)
    }

    /// Signed square root followed by L2 normalization. An input with no
    /// active component produces the zero vector.
    pub fn encode(&self, descriptors: &[&[f64]]) -> Result<FisherVector> {
        let dim = self.gmm.dim();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (j, block) in self.raw_blocks(descriptors)? {
            for (d, v) in block.into_iter().enumerate() {
                let p = v.signum() * v.abs().sqrt();
                if p != 0.0 {
                    indices.push((j * 2 * dim + d) as u32);
                    values.push(p);
                }
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(FisherVector {
            dim: self.output_dim(),
            indices,
            values,
        })
    }
}

/// Encodes one descriptor, or the average over a set, as a normalized FV.
pub fn fisher_vector(descriptors: &[&[f64]], gmm: &GmmCodebook) -> Result<FisherVector> {
    FisherEncoder::new(gmm, DEFAULT_MIN_POSTERIOR).encode(descriptors)
}
