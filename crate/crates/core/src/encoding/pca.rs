use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Linear projection of raw descriptors onto their leading principal
/// directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorPca {
    pub mean: Vec<f64>,
    /// `output_dim` rows of length `input_dim`.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub input_dim: usize,
}

impl DescriptorPca {
    pub fn output_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, descriptor: &[f64]) -> Result<Vec<f64>> {
        if descriptor.len() != self.input_dim {
            return Err(Error::VectorDimension {
                expected: self.input_dim,
                actual: descriptor.len(),
            });
        }
        let centered: Vec<f64> = descriptor.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self.basis.iter().map(|row| linalg::dot(row, &centered)).collect())
    }

    /// Back-projection into descriptor space.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (row, &c) in self.basis.iter().zip(coeffs) {
            out.iter_mut().zip(row).for_each(|(o, b)| *o += c * b);
        }
        out
    }
}

/// Fits a PCA keeping the top `output_dim` eigenvectors of the sample
/// covariance.
pub fn fit_descriptor_pca<S: AsRef<[f64]>>(samples: &[S], output_dim: usize) -> Result<DescriptorPca> {
    if samples.len() < output_dim || samples.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: output_dim.max(1),
            got: samples.len(),
        });
    }
    let input_dim = samples[0].as_ref().len();
    if input_dim < output_dim {
        return Err(Error::DimensionTooSmall {
            needed: output_dim,
            got: input_dim,
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.as_ref().len() != input_dim) {
        return Err(Error::VectorDimension {
            expected: input_dim,
            actual: bad.as_ref().len(),
        });
    }
    let (mean, cov) =
        linalg::mean_and_covariance(samples.iter().map(|s| s.as_ref()), input_dim);
    let (mut values, mut vectors) = linalg::symmetric_eigen(&cov, input_dim);
    values.truncate(output_dim);
    vectors.truncate(output_dim);
    Ok(DescriptorPca {
        mean,
        basis: vectors,
        eigenvalues: values,
        input_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insufficient_samples() {
        let samples = vec![vec![0.0; 100]; 95];
        assert!(matches!(
            fit_descriptor_pca(&samples, 96),
            Err(Error::InsufficientSamples { needed: 96, got: 95 })
        ));
    }

    #[test]
    fn too_few_dimensions() {
        let samples = vec![vec![0.0; 10]; 200];
        assert!(matches!(
            fit_descriptor_pca(&samples, 96),
            Err(Error::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn rank_one_sample_aligns_first_component() {
        let dir: Vec<f64> = (0..8).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let norm = linalg::dot(&dir, &dir).sqrt();
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|t| dir.iter().map(|d| 0.3 + d * (t as f64 - 10.0) * 0.01).collect())
            .collect();
        let pca = fit_descriptor_pca(&samples, 4).unwrap();
        let cos = linalg::dot(&pca.basis[0], &dir) / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-10);
        assert!(pca.eigenvalues[1] < 1e-12);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0, -(i as f64)]).collect();
        let pca = fit_descriptor_pca(&samples, 2).unwrap();
        assert!(pca.project(&[1.0, 2.0]).is_err());
        assert_eq!(pca.project(&[1.0, 2.0, 3.0]).unwrap().len(), 2);
    }
}
