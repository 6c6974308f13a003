//! Unnormalized Fisher vectors against finite differences of the GMM
//! log-likelihood.

use mscrf_core::encoding::{FisherEncoder, GmmCodebook};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `sum_i log sum_k w_k N(x_i | mu_k, sigma_k^2)`, written independently of
/// the library.
fn log_likelihood(w: &[f64], mu: &[Vec<f64>], sigma: &[Vec<f64>], xs: &[Vec<f64>]) -> f64 {
    xs.iter()
        .map(|x| {
            let terms: Vec<f64> = (0..w.len())
                .map(|k| {
                    let mut l = w[k].ln();
                    for d in 0..x.len() {
                        let s = sigma[k][d];
                        let z = (x[d] - mu[k][d]) / s;
                        l += -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                    }
                    l
                })
                .collect();
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
        })
        .sum()
}

fn random_instance(seed: u64) -> (GmmCodebook, Vec<Vec<f64>>) {
    let (k, dim) = (3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let means: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let variances: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.random_range(0.3..2.0)).collect()).collect();
    let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..dim).map(|_| rng.random_range(-2.5..2.5)).collect()).collect();
    (
        GmmCodebook {
            weights,
            means,
            variances,
            variance_floor: 1e-6,
            seed,
        },
        xs,
    )
}

/// Max relative error (normwise) between the analytic FV and the scaled
/// finite-difference gradient on one instance.
fn fv_gradient_error(seed: u64) -> f64 {
    let (gmm, xs) = random_instance(seed);
    let (k, dim) = (gmm.num_components(), gmm.dim());
    let n = xs.len() as f64;
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let analytic = FisherEncoder::new(&gmm, 0.0).raw(&refs).unwrap();

    let sigma: Vec<Vec<f64>> = gmm.variances.iter().map(|v| v.iter().map(|x| x.sqrt()).collect()).collect();
    let mut fd = vec![0.0; analytic.len()];
    for j in 0..k {
        for d in 0..dim {
            let h = 1e-5;
            let mut up = gmm.means.clone();
            let mut dn = gmm.means.clone();
            up[j][d] += h;
            dn[j][d] -= h;
            let g = (log_likelihood(&gmm.weights, &up, &sigma, &xs)
                - log_likelihood(&gmm.weights, &dn, &sigma, &xs))
                / (2.0 * h);
            fd[j * 2 * dim + d] = sigma[j][d] / (n * gmm.weights[j].sqrt()) * g;

            let hs = 1e-5 * sigma[j][d];
            let mut up = sigma.clone();
            let mut dn = sigma.clone();
            up[j][d] += hs;
            dn[j][d] -= hs;
            let g = (log_likelihood(&gmm.weights, &gmm.means, &up, &xs)
                - log_likelihood(&gmm.weights, &gmm.means, &dn, &xs))
                / (2.0 * hs);
            fd[j * 2 * dim + dim + d] = sigma[j][d] / (n * (2.0 * gmm.weights[j]).sqrt()) * g;
        }
    }
    let diff = analytic.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
    let scale = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
    diff / scale
}

#[test]
fn fisher_vector_matches_finite_differences() {
    let start = std::time::Instant::now();
    for seed in 0..50 {
        let err = fv_gradient_error(seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
