//! Unpenalized logistic regression against a Newton-Raphson oracle.

use mscrf_core::classify::{train_slr_with_trace, SlrParams};
use mscrf_core::encoding::FisherVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves a small dense linear system by Gaussian elimination with partial
/// pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Newton iterations on the mean logistic loss with an intercept; returns
/// `(w, b)`.
fn newton_logistic(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut theta = vec![0.0; d + 1];
    for _ in 0..50 {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![vec![0.0; d + 1]; d + 1];
        for (xi, &yi) in x.iter().zip(y) {
            let mut z = theta[d];
            for j in 0..d {
                z += theta[j] * xi[j];
            }
            let p = 1.0 / (1.0 + (-z).exp());
            let t = (yi + 1.0) / 2.0;
            let feat: Vec<f64> = xi.iter().copied().chain(std::iter::once(1.0)).collect();
            for a in 0..=d {
                grad[a] += (p - t) * feat[a] / n;
                for b in 0..=d {
                    hess[a][b] += p * (1.0 - p) * feat[a] * feat[b] / n;
                }
            }
        }
        let step = solve(hess, grad.clone());
        theta.iter_mut().zip(&step).for_each(|(t, s)| *t -= s);
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-14 {
            break;
        }
    }
    let b = theta.pop().unwrap();
    (theta, b)
}

#[test]
fn zero_penalty_matches_newton() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dim = 3;
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..120 {
        let class = i % 2;
        let shift = if class == 0 { 0.4 } else { -0.4 };
        let x: Vec<f64> = (0..dim).map(|j| shift * (j as f64 + 1.0) / 3.0 + rng.random_range(-1.0..1.0)).collect();
        xs.push(x);
        labels.push(class);
    }
    let fvs: Vec<FisherVector> = xs.iter().map(|x| FisherVector::from_dense(x)).collect();
    let params = SlrParams {
        penalty: 0.0,
        max_iterations: 20_000,
        tolerance: 1e-10,
    };
    let (clf, traces) = train_slr_with_trace(&fvs, &labels, 2, &params).unwrap();
    for (k, trace) in traces.iter().enumerate() {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let (w, b) = newton_logistic(&xs, &y);
        for j in 0..dim {
            assert!((clf.weights[k][j] - w[j]).abs() < 1e-3, "head {k} weight {j}: {} vs {}", clf.weights[k][j], w[j]);
        }
        assert!((clf.biases[k] - b).abs() < 1e-3);
        assert!(trace.objective.windows(2).all(|p| p[1] <= p[0]));
    }
}
