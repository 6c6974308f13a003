use mscrf_core::encoding::{fit_gmm, GmmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn mixture_sample(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
    (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..centers.len())];
            c.iter().map(|m| m + 0.7 * normal.sample(&mut rng)).collect()
        })
        .collect()
}

#[test]
fn log_likelihood_never_decreases() {
    for seed in 0..20 {
        let data = mixture_sample(seed, 600, 6);
        let params = GmmParams {
            components: 8,
            seed,
            ..GmmParams::default()
        };
        let fit = fit_gmm(&data, &params).unwrap();
        assert!(fit.log_likelihood.len() >= 2);
        for pair in fit.log_likelihood.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8, "seed {seed}: {} -> {}", pair[0], pair[1]);
        }
        let w: f64 = fit.codebook.weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-9);
        assert!(fit.codebook.variances.iter().flatten().all(|&v| v >= params.variance_floor));
    }
}

#[test]
fn fit_is_reproducible_under_parallelism() {
    let data = mixture_sample(99, 3000, 5);
    let params = GmmParams {
        components: 6,
        seed: 4,
        ..GmmParams::default()
    };
    let a = fit_gmm(&data, &params).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| fit_gmm(&data, &params).unwrap());
    assert_eq!(a.codebook, b.codebook);
    assert_eq!(a.log_likelihood, b.log_likelihood);
}
