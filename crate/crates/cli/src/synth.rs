//! Synthetic two-region RGB+NIR corpus.
//!
//! Both classes share one isotropic RGB texture, so visible channels carry
//! no class information. They differ only in the NIR plane: class 0 shows
//! vertical stripes, class 1 horizontal ones. Each scene is split by a
//! random straight line.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use mscrf_core::imageio::{
    write_image_pair, write_mask, DatasetManifest, LabelMask, ManifestEntry, Mode, MultiChannelImage, Plane,
    NUM_FOLDS,
};

use crate::error::{CliError, CliResult};

pub const SYNTH_LABELS: [&str; 2] = ["vertical", "horizontal"];

#[derive(Clone, Debug)]
pub struct SynthParams {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            count: 40,
            size: 64,
            seed: 0,
        }
    }
}

/// Box-blurred white noise, rescaled to roughly unit spread.
fn smooth_noise(rng: &mut ChaCha8Rng, size: usize, radius: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let raw: Vec<f64> = (0..size * size).map(|_| normal.sample(rng)).collect();
    let r = radius as isize;
    let n = size as isize;
    let mut out = vec![0.0; size * size];
    for y in 0..n {
        for x in 0..n {
            let mut s = 0.0;
            let mut c = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = ((x + dx).clamp(0, n - 1), (y + dy).clamp(0, n - 1));
                    s += raw[(yy * n + xx) as usize];
                    c += 1.0;
                }
            }
            out[(y * n + x) as usize] = s / c * (2 * radius + 1) as f64;
        }
    }
    out
}

/// Scene `index` of a corpus generated with `seed`.
pub fn synthetic_scene(index: usize, size: usize, seed: u64) -> (MultiChannelImage, LabelMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    // dividing line through a point near the center
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let (nx, ny) = (angle.cos(), angle.sin());
    let c = size as f64 / 2.0;
    let (px, py) = (c + rng.random_range(-0.15..0.15) * size as f64, c + rng.random_range(-0.15..0.15) * size as f64);
    let flip = rng.random_bool(0.5);
    let label = |x: usize, y: usize| {
        let side = (x as f64 - px) * nx + (y as f64 - py) * ny >= 0.0;
        u8::from(side != flip)
    };

    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.65));
    let texture = smooth_noise(&mut rng, size, 1);
    let vis = |k: usize| {
        Plane::from_fn(size, size, |x, y| (tint[k] + 0.08 * texture[y * size + x]).clamp(0.0, 1.0))
    };
    let period = rng.random_range(5.0..8.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let nir_noise = smooth_noise(&mut rng, size, 0);
    let nir = Plane::from_fn(size, size, |x, y| {
        let t = if label(x, y) == 0 { x as f64 } else { y as f64 };
        let stripe = (std::f64::consts::TAU * t / period + phase).sin();
        (0.5 + 0.3 * stripe + 0.03 * nir_noise[y * size + x]).clamp(0.0, 1.0)
    });
    let id = format!("scene{index:03}");
    let img = MultiChannelImage::new(id, vis(0), vis(1), vis(2), Some(nir)).expect("valid synthetic planes");
    let labels = (0..size * size).map(|i| label(i % size, i / size)).collect();
    let mask = LabelMask::new(size, size, labels, SYNTH_LABELS.len(), Mode::OutdoorVoid).expect("valid labels");
    (img, mask)
}

/// Writes the corpus as 8-bit PNGs plus `manifest.json` (fold `i % 5`) and
/// returns the manifest path.
pub fn write_corpus(dir: &Path, params: &SynthParams) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut entries = Vec::with_capacity(params.count);
    for i in 0..params.count {
        let (img, mask) = synthetic_scene(i, params.size, params.seed);
        let stem = format!("scene{i:03}");
        let (rgb, nir, gt) = (format!("{stem}_rgb.png"), format!("{stem}_nir.png"), format!("{stem}_mask.png"));
        write_image_pair(&img, &dir.join(&rgb), Some(&dir.join(&nir)))?;
        write_mask(&mask, &dir.join(&gt))?;
        entries.push(ManifestEntry {
            rgb: rgb.into(),
            nir: Some(nir.into()),
            mask: Some(gt.into()),
            fold: (i % NUM_FOLDS as usize) as u8,
        });
    }
    let manifest = DatasetManifest {
        mode: Mode::OutdoorVoid,
        label_names: SYNTH_LABELS.iter().map(|s| s.to_string()).collect(),
        entries,
        root: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
