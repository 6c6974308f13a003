//! Small dense helpers shared by the two PCA stages.

use nalgebra::{DMatrix, SymmetricEigen};

/// Mean vector and population covariance (row-major `dim x dim`) of `rows`.
pub(crate) fn mean_and_covariance<'a, I>(rows: I, dim: usize) -> (Vec<f64>, Vec<f64>)
where
    I: IntoIterator<Item = &'a [f64]> + Clone,
{
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows.clone() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
        n += 1;
    }
    if n == 0 {
        return (mean, vec![0.0; dim * dim]);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for row in rows {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let out = &mut cov[i * dim..(i + 1) * dim];
            for j in i..dim {
                out[j] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[i * dim + j] / n as f64;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }
    (mean, cov)
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in non-increasing order (negative round-off clamped to
/// zero) and the matching unit eigenvectors as rows. Each eigenvector's
/// largest-magnitude entry is made positive so results are reproducible.
pub(crate) fn symmetric_eigen(matrix: &[f64], dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = DMatrix::from_row_slice(dim, dim, matrix);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    for k in order {
        values.push(eig.eigenvalues[k].max(0.0));
        let col = eig.eigenvectors.column(k);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.push(v);
    }
    (values, vectors)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let m = [1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let (vals, vecs) = symmetric_eigen(&m, 3);
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert_eq!(vecs[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(vecs[2], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn covariance_of_two_points() {
        let rows = [vec![0.0, 0.0], vec![2.0, 4.0]];
        let (mean, cov) = mean_and_covariance(rows.iter().map(Vec::as_slice), 2);
        assert_eq!(mean, vec![1.0, 2.0]);
        assert_eq!(cov, vec![1.0, 2.0, 2.0, 4.0]);
    }
}
