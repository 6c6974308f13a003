//! Diagonal-covariance Gaussian mixture fitted by EM from a k-means++ seed.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 128;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

/// Rows per E-step work unit; fixed so parallel reductions are reproducible.
const CHUNK: usize = 256;
const LLOYD_ITERATIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub components: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            components: DEFAULT_COMPONENTS,
            max_iterations: 100,
            tolerance: 1e-5,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

/// The visual codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmCodebook {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub variance_floor: f64,
    pub seed: u64,
}

/// Result of [`fit_gmm`]: the codebook plus the per-iteration mean
/// log-likelihood, starting from the initialization.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub codebook: GmmCodebook,
    pub log_likelihood: Vec<f64>,
}

/// Per-component constants for fast density evaluation.
struct Prepared {
    log_norm: Vec<f64>,
    inv_var: Vec<Vec<f64>>,
}

impl GmmCodebook {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn prepare(&self) -> Prepared {
        let log_norm = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(&w, var)| {
                if w > 0.0 {
                    w.ln() - 0.5 * var.iter().map(|v| (TAU * v).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let inv_var = self
            .variances
            .iter()
            .map(|var| var.iter().map(|v| 1.0 / v).collect())
            .collect();
        Prepared { log_norm, inv_var }
    }

    /// Writes `log(w_k N(x | mu_k, var_k))` into `out` and returns
    /// `log p(x)`.
    fn joint_log(&self, prep: &Prepared, x: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.weights.len() {
            let ln = prep.log_norm[k];
            if ln == f64::NEG_INFINITY {
                out[k] = ln;
                continue;
            }
            let mut q = 0.0;
            for ((xi, m), iv) in x.iter().zip(&self.means[k]).zip(&prep.inv_var[k]) {
                let d = xi - m;
                q += d * d * iv;
            }
            out[k] = ln - 0.5 * q;
            max = max.max(out[k]);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = out.iter().map(|l| (l - max).exp()).sum();
        max + sum.ln()
    }

    /// Posterior component probabilities of `x`; they sum to one.
    pub fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let prep = self.prepare();
        let mut out = vec![0.0; self.num_components()];
        self.posteriors_prepared(&prep, x, &mut out);
        out
    }

    fn posteriors_prepared(&self, prep: &Prepared, x: &[f64], out: &mut [f64]) -> f64 {
        let total = self.joint_log(prep, x, out);
        out.iter_mut().for_each(|l| *l = (*l - total).exp());
        total
    }

    /// Mean per-sample log-likelihood of `data`.
    pub fn mean_log_likelihood<S: AsRef<[f64]> + Sync>(&self, data: &[S]) -> f64 {
        let prep = self.prepare();
        let k = self.num_components();
        let partial: Vec<f64> = data
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut buf = vec![0.0; k];
                chunk
                    .iter()
                    .map(|x| self.joint_log(&prep, x.as_ref(), &mut buf))
                    .sum::<f64>()
            })
            .collect();
        partial.iter().sum::<f64>() / data.len() as f64
    }

    pub(crate) fn posteriors_with(&self) -> impl Fn(&[f64], &mut [f64]) + '_ {
        let prep = self.prepare();
        move |x, out| {
            self.posteriors_prepared(&prep, x, out);
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans_plus_plus<S: AsRef<[f64]>>(data: &[S], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].as_ref().to_vec()];
    let mut dist: Vec<f64> = data
        .iter()
        .map(|x| squared_distance(x.as_ref(), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // every point coincides with a center already
            0
        };
        let c = data[pick].as_ref().to_vec();
        for (d, x) in dist.iter_mut().zip(data) {
            *d = d.min(squared_distance(x.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

/// Sufficient statistics of one E-step (or hard assignment) pass.
#[derive(Clone)]
struct Stats {
    count: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
    log_likelihood: f64,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Stats {
            count: vec![0.0; k],
            sum: vec![vec![0.0; dim]; k],
            sum_sq: vec![vec![0.0; dim]; k],
            log_likelihood: 0.0,
        }
    }

    fn add(&mut self, k: usize, weight: f64, x: &[f64]) {
        self.count[k] += weight;
        for ((s, q), v) in self.sum[k].iter_mut().zip(&mut self.sum_sq[k]).zip(x) {
            *s += weight * v;
            *q += weight * v * v;
        }
    }

    fn merge(&mut self, other: &Stats) {
        self.log_likelihood += other.log_likelihood;
        for k in 0..self.count.len() {
            self.count[k] += other.count[k];
            for d in 0..self.sum[k].len() {
                self.sum[k][d] += other.sum[k][d];
                self.sum_sq[k][d] += other.sum_sq[k][d];
            }
        }
    }

    /// Maximization step; components with no mass keep their parameters
    /// and get weight zero.
    fn maximize(&self, n: usize, floor: f64, codebook: &mut GmmCodebook) {
        for k in 0..self.count.len() {
            let nk = self.count[k];
            codebook.weights[k] = nk / n as f64;
            if nk <= 0.0 {
                continue;
            }
            for d in 0..self.sum[k].len() {
                let mean = self.sum[k][d] / nk;
                let var = self.sum_sq[k][d] / nk - mean * mean;
                codebook.means[k][d] = mean;
                codebook.variances[k][d] = var.max(floor);
            }
        }
    }
}

fn e_step<S: AsRef<[f64]> + Sync>(codebook: &GmmCodebook, data: &[S]) -> Stats {
    let prep = codebook.prepare();
    let (k, dim) = (codebook.num_components(), codebook.dim());
    let partial: Vec<Stats> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut stats = Stats::zeros(k, dim);
            let mut post = vec![0.0; k];
            for x in chunk {
                let x = x.as_ref();
                stats.log_likelihood += codebook.posteriors_prepared(&prep, x, &mut post);
                for (j, &g) in post.iter().enumerate() {
                    if g > 0.0 {
                        stats.add(j, g, x);
                    }
                }
            }
            stats
        })
        .collect();
    let mut total = Stats::zeros(k, dim);
    for p in &partial {
        total.merge(p);
    }
    total
}

/// Fits a `params.components`-component diagonal GMM.
///
/// Initialization: k-means++ seeding, a few Lloyd iterations, then
/// parameters from the hard assignment. EM runs until the relative change of
/// the mean log-likelihood drops below `params.tolerance` or
/// `params.max_iterations` M-steps have been taken.
pub fn fit_gmm<S: AsRef<[f64]> + Sync>(data: &[S], params: &GmmParams) -> Result<GmmFit> {
    let k = params.components;
    if k == 0 {
        return Err(Error::InvalidParameter("GMM needs at least one component".into()));
    }
    if params.variance_floor <= 0.0 {
        return Err(Error::InvalidParameter("variance floor must be positive".into()));
    }
    let needed = 10 * k;
    if data.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: data.len(),
        });
    }
    let dim = data[0].as_ref().len();
    if let Some(bad) = data.iter().find(|x| x.as_ref().len() != dim) {
        return Err(Error::VectorDimension {
            expected: dim,
            actual: bad.as_ref().len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centers = kmeans_plus_plus(data, k, &mut rng);
    let mut assignment = vec![0usize; data.len()];
    for _ in 0..LLOYD_ITERATIONS {
        let next: Vec<usize> = data.par_iter().map(|x| nearest(&centers, x.as_ref()).0).collect();
        let changed = next != assignment;
        assignment = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x.as_ref()).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }

    let mut codebook = GmmCodebook {
        weights: vec![0.0; k],
        means: centers,
        variances: vec![vec![params.variance_floor; dim]; k],
        variance_floor: params.variance_floor,
        seed: params.seed,
    };
    let mut hard = Stats::zeros(k, dim);
    for (x, &a) in data.iter().zip(&assignment) {
        hard.add(a, 1.0, x.as_ref());
    }
    hard.maximize(data.len(), params.variance_floor, &mut codebook);

    let n = data.len();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let stats = e_step(&codebook, data);
        let ll = stats.log_likelihood / n as f64;
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| ((ll - prev) / prev.abs().max(1e-300)).abs() < params.tolerance);
        trace.push(ll);
        if converged || iterations == params.max_iterations {
            break;
        }
        stats.maximize(n, params.variance_floor, &mut codebook);
        iterations += 1;
    }

    Ok(GmmFit {
        codebook,
        log_likelihood: trace,
    })
}
