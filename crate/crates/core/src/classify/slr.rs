//! One-vs-all L1-regularized logistic regression on sparse feature vectors.
//!
//! Each head minimizes `mean_i log(1 + exp(-y_i (w.x_i + b))) + penalty |w|_1`
//! with monotone FISTA (Beck & Teboulle's MFISTA) and backtracking, so the
//! objective recorded at every iteration never increases. The bias is not
//! penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::FisherVector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlrParams {
    pub penalty: f64,
    pub max_iterations: usize,
    /// Stop when the gradient-mapping norm falls below this.
    pub tolerance: f64,
}

impl Default for SlrParams {
    fn default() -> Self {
        SlrParams {
            penalty: 1e-4,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// One dense weight vector per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub penalty: f64,
}

impl LinearClassifier {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, fv: &FisherVector) -> Result<Vec<f64>> {
        if fv.dim() != self.dim() {
            return Err(Error::VectorDimension {
                expected: self.dim(),
                actual: fv.dim(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| fv.dot(w) + b)
            .collect())
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))`, stable for any margin.
fn logistic_loss(margin: f64) -> f64 {
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

/// Per-class probability `1 / (1 + exp(-s_k))`.
pub fn patch_probability(classifier: &LinearClassifier, fv: &FisherVector) -> Result<Vec<f64>> {
    Ok(classifier.scores(fv)?.into_iter().map(sigmoid).collect())
}

/// Training record of one head.
#[derive(Clone, Debug, Default)]
pub struct HeadTrace {
    /// Objective value of the accepted iterate, starting at `w = 0, b = 0`.
    pub objective: Vec<f64>,
}

struct Problem<'a> {
    x: &'a [FisherVector],
    y: Vec<f64>,
    penalty: f64,
    dim: usize,
}

impl Problem<'_> {
    fn smooth(&self, w: &[f64], b: f64) -> f64 {
        let n = self.x.len() as f64;
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| logistic_loss(y * (x.dot(w) + b)))
            .sum::<f64>()
            / n
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        self.smooth(w, b) + self.penalty * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let n = self.x.len() as f64;
        let mut gw = vec![0.0; self.dim];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (x, y) in self.x.iter().zip(&self.y) {
            let m = y * (x.dot(w) + b);
            loss += logistic_loss(m);
            let r = -y * sigmoid(-m) / n;
            if r != 0.0 {
                gb += r;
                for (i, v) in x.iter() {
                    gw[i] += r * v;
                }
            }
        }
        (loss / n, gw, gb)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn train_head(problem: &Problem, params: &SlrParams) -> (Vec<f64>, f64, HeadTrace) {
    let d = problem.dim;
    let mean_sq = problem.x.iter().map(|x| x.norm().powi(2) + 1.0).sum::<f64>()
        / problem.x.len() as f64;
    // optimistic start; backtracking raises it as needed
    let mut lipschitz = (mean_sq / 4.0 / 64.0).max(1e-12);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f_best = problem.objective(&w, b);
    let mut yw = w.clone();
    let mut yb = b;
    let mut t = 1.0f64;
    let mut trace = HeadTrace {
        objective: vec![f_best],
    };

    for _ in 0..params.max_iterations {
        let (fy, gw, gb) = problem.gradient(&yw, yb);
        let (zw, zb, fz_smooth) = loop {
            let step = 1.0 / lipschitz;
            let zw: Vec<f64> = yw
                .iter()
                .zip(&gw)
                .map(|(y, g)| soft_threshold(y - step * g, step * problem.penalty))
                .collect();
            let zb = yb - step * gb;
            let fz = problem.smooth(&zw, zb);
            let mut lin = gb * (zb - yb);
            let mut sq = (zb - yb) * (zb - yb);
            for i in 0..d {
                let diff = zw[i] - yw[i];
                lin += gw[i] * diff;
                sq += diff * diff;
            }
            if fz <= fy + lin + 0.5 * lipschitz * sq + 1e-12 * fy.abs() {
                break (zw, zb, fz);
            }
            lipschitz *= 2.0;
        };

        let mapping_norm = lipschitz
            * (zw.iter().zip(&yw).map(|(z, y)| (z - y).powi(2)).sum::<f64>() + (zb - yb).powi(2))
                .sqrt();

        let fz = fz_smooth + problem.penalty * zw.iter().map(|v| v.abs()).sum::<f64>();
        let (prev_w, prev_b) = (w.clone(), b);
        if fz <= f_best {
            w.clone_from(&zw);
            b = zb;
            f_best = fz;
        }
        trace.objective.push(f_best);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let a = t / t_next;
        let c = (t - 1.0) / t_next;
        for i in 0..d {
            yw[i] = w[i] + a * (zw[i] - w[i]) + c * (w[i] - prev_w[i]);
        }
        yb = b + a * (zb - b) + c * (b - prev_b);
        t = t_next;

        if mapping_norm < params.tolerance {
            break;
        }
    }
    (w, b, trace)
}

/// Trains one head per class. `labels[i]` is the class of sample `i`;
/// values `>= num_classes` mark samples that are negative for every head
/// (e.g. background patches).
pub fn train_slr_with_trace(
    fvs: &[FisherVector],
    labels: &[usize],
    num_classes: usize,
    params: &SlrParams,
) -> Result<(LinearClassifier, Vec<HeadTrace>)> {
    if fvs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature vectors but {} labels",
            fvs.len(),
            labels.len()
        )));
    }
    if params.penalty < 0.0 {
        return Err(Error::InvalidParameter("penalty must be non-negative".into()));
    }
    let mut distinct: Vec<usize> = labels.iter().map(|&l| l.min(num_classes)).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::SingleClassData);
    }
    let dim = fvs[0].dim();
    if let Some(bad) = fvs.iter().find(|f| f.dim() != dim) {
        return Err(Error::VectorDimension {
            expected: dim,
            actual: bad.dim(),
        });
    }

    let heads: Vec<(Vec<f64>, f64, HeadTrace)> = (0..num_classes)
        .into_par_iter()
        .map(|k| {
            let problem = Problem {
                x: fvs,
                y: labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect(),
                penalty: params.penalty,
                dim,
            };
            train_head(&problem, params)
        })
        .collect();

    let mut weights = Vec::with_capacity(num_classes);
    let mut biases = Vec::with_capacity(num_classes);
    let mut traces = Vec::with_capacity(num_classes);
    for (w, b, tr) in heads {
        weights.push(w);
        biases.push(b);
        traces.push(tr);
    }
    Ok((
        LinearClassifier {
            weights,
            biases,
            penalty: params.penalty,
        },
        traces,
    ))
}

pub fn train_slr(
    fvs: &[FisherVector],
    labels: &[usize],
    num_classes: usize,
    params: &SlrParams,
) -> Result<LinearClassifier> {
    train_slr_with_trace(fvs, labels, num_classes, params).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub(values: &[f64]) -> FisherVector {
        FisherVector::from_dense(values)
    }

    fn separable() -> (Vec<FisherVector>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 10.0;
            x.push(stub(&[1.0 + t, 0.5 - 0.2 * t]));
            y.push(0);
            x.push(stub(&[-1.0 - t, -0.3 + 0.1 * t]));
            y.push(1);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (x, y) = separable();
        let params = SlrParams {
            penalty: 1e-3,
            ..SlrParams::default()
        };
        let clf = train_slr(&x, &y, 2, &params).unwrap();
        for (fv, &label) in x.iter().zip(&y) {
            let p = patch_probability(&clf, fv).unwrap();
            let pred = if p[0] >= p[1] { 0 } else { 1 };
            assert_eq!(pred, label);
        }
    }

    #[test]
    fn huge_penalty_leaves_bias_only() {
        let (x, y) = separable();
        let params = SlrParams {
            penalty: 1e6,
            max_iterations: 2000,
            ..SlrParams::default()
        };
        let clf = train_slr(&x, &y, 2, &params).unwrap();
        assert!(clf.weights.iter().flatten().all(|&w| w == 0.0));
        // balanced classes: the optimal bias is log-odds 0
        for b in &clf.biases {
            assert!(b.abs() < 1e-4);
        }
    }

    #[test]
    fn objective_is_monotone() {
        let (x, y) = separable();
        let (_, traces) = train_slr_with_trace(&x, &y, 2, &SlrParams::default()).unwrap();
        for tr in traces {
            for w in tr.objective.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![stub(&[1.0]), stub(&[2.0])];
        assert!(matches!(
            train_slr(&x, &[0, 0], 3, &SlrParams::default()),
            Err(Error::SingleClassData)
        ));
    }

    #[test]
    fn background_samples_count_as_second_class() {
        let x = vec![stub(&[1.0]), stub(&[-1.0])];
        assert!(train_slr(&x, &[0, 1], 1, &SlrParams::default()).is_ok());
    }

    #[test]
    fn probability_closed_forms() {
        let clf = LinearClassifier {
            weights: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            biases: vec![0.0, 0.0],
            penalty: 0.0,
        };
        let p = patch_probability(&clf, &stub(&[3f64.ln(), 0.0])).unwrap();
        assert_eq!(p[0], 0.5);
        assert!((p[1] - 0.75).abs() < 1e-15);
        assert!(patch_probability(&clf, &stub(&[1.0])).is_err());
        let mut last = 0.0;
        for s in [-50.0, -5.0, -1.0, 0.0, 1.0, 5.0, 30.0] {
            let p = sigmoid(s);
            assert!(p > last);
            last = p;
        }
    }
}
