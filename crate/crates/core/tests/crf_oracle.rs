//! Alpha-expansion against exhaustive search and constructed fixtures.

use mscrf_core::classify::{apply_background_rule, UnaryField};
use mscrf_core::crf::{
    alpha_expansion, alpha_expansion_from, ContrastImage, EnergyModel, Labeling, PairwiseMode,
};
use mscrf_core::imageio::{Mode, MultiChannelImage, Plane};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(seed: u64, lambda: f64) -> EnergyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, l) = (3, 3, 3);
    let probs: Vec<f64> = (0..w * h * l).map(|_| rng.random_range(0.01..0.99)).collect();
    let field = UnaryField::new(w, h, l, probs).unwrap();
    let mut plane = |_: usize| {
        let vals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        Plane::new(w, h, vals).unwrap()
    };
    let (r, g, b) = (plane(0), plane(1), plane(2));
    let img = MultiChannelImage::new("grid", r, g, b, None).unwrap();
    let contrast = ContrastImage::from_image(&img, PairwiseMode::Vis).unwrap();
    EnergyModel::new(&field, &contrast, lambda).unwrap()
}

fn brute_force_minimum(model: &EnergyModel) -> f64 {
    let n = model.width * model.height;
    let l = model.num_labels;
    let mut best = f64::INFINITY;
    let mut labels = vec![0u8; n];
    for code in 0..l.pow(n as u32) {
        let mut c = code;
        for v in labels.iter_mut() {
            *v = (c % l) as u8;
            c /= l;
        }
        let x = Labeling::new(model.width, model.height, labels.clone()).unwrap();
        best = best.min(model.total_energy(&x).unwrap());
    }
    best
}

#[test]
fn matches_exhaustive_search_on_small_grids() {
    let mut exact = 0;
    let mut trials = 0;
    for seed in 0..60 {
        for lambda in [0.5, 5.0] {
            let model = random_grid(seed, lambda);
            let opt = brute_force_minimum(&model);
            let result = alpha_expansion(&model).unwrap();
            let e = model.total_energy(&result.labeling).unwrap();
            assert!(e <= 2.0 * opt + 1e-9, "seed {seed}: {e} vs optimum {opt}");
            assert!(e >= opt - 1e-9);
            trials += 1;
            if (e - opt).abs() <= 1e-6 * opt.abs().max(1.0) {
                exact += 1;
            }
        }
    }
    assert!(exact as f64 >= 0.95 * trials as f64, "{exact}/{trials} exact");
}

#[test]
fn accepted_moves_strictly_decrease_energy() {
    for seed in 0..30 {
        let model = random_grid(1000 + seed, 5.0);
        // start from a deliberately poor labeling
        let init = Labeling::new(3, 3, (0..9).map(|i| (i % 3) as u8).collect()).unwrap();
        let result = alpha_expansion_from(&model, &init).unwrap();
        assert_eq!(result.trace[0], model.total_energy_fixed(&init).unwrap());
        for pair in result.trace.windows(2) {
            assert!(pair[1] < pair[0]);
        }
        assert!(result.energy_fixed <= result.trace[0]);
    }
}

#[test]
fn agreeing_strong_unaries_are_kept() {
    let field = UnaryField::new(2, 1, 2, vec![0.95, 0.05, 0.05, 0.95]).unwrap();
    let img = MultiChannelImage::new(
        "pair",
        Plane::filled(2, 1, 0.5),
        Plane::filled(2, 1, 0.5),
        Plane::filled(2, 1, 0.5),
        None,
    )
    .unwrap();
    let contrast = ContrastImage::from_image(&img, PairwiseMode::Vis).unwrap();
    let model = EnergyModel::new(&field, &contrast, 1.0).unwrap();
    let init = Labeling::new(2, 1, vec![0, 1]).unwrap();
    let result = alpha_expansion_from(&model, &init).unwrap();
    assert_eq!(result.labeling, init);
    assert_eq!(result.trace.len(), 1);
}

#[test]
fn stronger_smoothing_never_adds_disagreements() {
    for seed in 0..15 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (w, h, l) = (10, 8, 4);
        let probs: Vec<f64> = (0..w * h * l).map(|_| rng.random_range(0.05..0.95)).collect();
        let field = UnaryField::new(w, h, l, probs).unwrap();
        let flat = |v: f64| Plane::filled(w, h, v);
        let img = MultiChannelImage::new("flat", flat(0.3), flat(0.3), flat(0.3), None).unwrap();
        let contrast = ContrastImage::from_image(&img, PairwiseMode::Vis).unwrap();
        let mut last = usize::MAX;
        for lambda in [0.0, 0.5, 5.0, 50.0] {
            let model = EnergyModel::new(&field, &contrast, lambda).unwrap();
            let init = Labeling::new(w, h, field.argmax()).unwrap();
            let count = alpha_expansion_from(&model, &init).unwrap().labeling.disagreeing_pairs();
            assert!(count <= last, "seed {seed} lambda {lambda}: {count} > {last}");
            last = count;
        }
    }
}

#[test]
fn boundary_snaps_to_contrast_edge() {
    // dark left half, bright right half; unaries are ambiguous in columns 5..=10
    let (w, h) = (16, 8);
    let intensity = |x: usize| if x < 8 { 0.1 } else { 0.9 };
    let plane = || Plane::from_fn(w, h, |x, _| intensity(x));
    let img = MultiChannelImage::new("edge", plane(), plane(), plane(), None).unwrap();
    let mut probs = Vec::new();
    for _y in 0..h {
        for x in 0..w {
            let p0 = match x {
                0..=4 => 0.8,
                5..=10 => 0.5,
                _ => 0.2,
            };
            probs.extend([p0, 1.0 - p0]);
        }
    }
    let field = UnaryField::new(w, h, 2, probs).unwrap();
    let contrast = ContrastImage::from_image(&img, PairwiseMode::Vis).unwrap();
    let model = EnergyModel::new(&field, &contrast, 5.0).unwrap();
    let result = alpha_expansion(&model).unwrap();
    let expected: Vec<u8> = (0..w * h).map(|i| u8::from(i % w >= 8)).collect();
    assert_eq!(result.labeling.labels, expected);
}

#[test]
fn pairwise_is_symmetric() {
    let model = random_grid(3, 1.0);
    for (i, j) in [(0, 1), (1, 2), (0, 3), (4, 7)] {
        for (a, b) in [(0u8, 1u8), (2, 0), (1, 1)] {
            assert_eq!(
                model.pairwise_potential(i, j, a, b).unwrap(),
                model.pairwise_potential(j, i, b, a).unwrap()
            );
        }
    }
    assert!(model.pairwise_potential(0, 4, 0, 1).is_err());
}

#[test]
fn indoor_rule_without_smoothing() {
    // pixels whose best class is below the threshold become background
    let (w, h) = (4, 1);
    let field = UnaryField::new(w, h, 2, vec![0.3, 0.4, 0.9, 0.1, 0.45, 0.2, 0.1, 0.7]).unwrap();
    let with_bg = apply_background_rule(&field, 0.5, Mode::IndoorBackground).unwrap();
    let img = MultiChannelImage::new(
        "bg",
        Plane::filled(w, h, 0.2),
        Plane::filled(w, h, 0.2),
        Plane::filled(w, h, 0.2),
        None,
    )
    .unwrap();
    let contrast = ContrastImage::from_image(&img, PairwiseMode::Vis).unwrap();
    let model = EnergyModel::new(&with_bg, &contrast, 0.0).unwrap();
    let init = Labeling::new(w, h, with_bg.argmax()).unwrap();
    let result = alpha_expansion_from(&model, &init).unwrap();
    assert_eq!(result.labeling.labels, vec![2, 0, 2, 1]);
}
