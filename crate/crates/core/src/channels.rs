//! Channel identifiers and derived channels: luma and the PCA-decorrelated
//! RGBN space (`P1..P4`).

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{MultiChannelImage, Plane};
use crate::linalg;

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    R,
    G,
    B,
    #[serde(rename = "NIR")]
    Nir,
    L,
    P1,
    P2,
    P3,
    P4,
}

impl ChannelId {
    pub const PCA: [ChannelId; 4] = [ChannelId::P1, ChannelId::P2, ChannelId::P3, ChannelId::P4];

    /// Channels that come from the sensor rather than being derived.
    pub fn is_raw(self) -> bool {
        matches!(self, ChannelId::R | ChannelId::G | ChannelId::B | ChannelId::Nir)
    }

    pub fn is_pca(self) -> bool {
        Self::PCA.contains(&self)
    }

    /// Whether producing this channel requires the NIR plane.
    pub fn needs_nir(self) -> bool {
        self == ChannelId::Nir || self.is_pca()
    }

    fn suffix(self) -> &'static str {
        match self {
            ChannelId::R => "r",
            ChannelId::G => "g",
            ChannelId::B => "b",
            ChannelId::Nir => "n",
            ChannelId::L => "l",
            ChannelId::P1 => "p1",
            ChannelId::P2 => "p2",
            ChannelId::P3 => "p3",
            ChannelId::P4 => "p4",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChannelId::R => "R",
            ChannelId::G => "G",
            ChannelId::B => "B",
            ChannelId::Nir => "NIR",
            ChannelId::L => "L",
            ChannelId::P1 => "P1",
            ChannelId::P2 => "P2",
            ChannelId::P3 => "P3",
            ChannelId::P4 => "P4",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "R" => ChannelId::R,
            "G" => ChannelId::G,
            "B" => ChannelId::B,
            "NIR" | "N" => ChannelId::Nir,
            "L" => ChannelId::L,
            "P1" => ChannelId::P1,
            "P2" => ChannelId::P2,
            "P3" => ChannelId::P3,
            "P4" => ChannelId::P4,
            _ => return Err(Error::InvalidParameter(format!("unknown channel `{s}`"))),
        })
    }
}

/// An ordered, duplicate-free, non-empty list of channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ChannelId>", into = "Vec<ChannelId>")]
pub struct ChannelSet(Vec<ChannelId>);

impl ChannelSet {
    pub fn new(ids: Vec<ChannelId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidParameter("channel set is empty".into()));
        }
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(Error::InvalidParameter(format!("channel {id} listed twice")));
            }
        }
        Ok(ChannelSet(ids))
    }

    /// Parses the compact subscript notation: `rgb`, `rgbn`, `l`, `n`,
    /// `p1`, `p1234`.
    pub fn from_suffix(suffix: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut chars = suffix.chars().peekable();
        while let Some(c) = chars.next() {
            let id = match c.to_ascii_lowercase() {
                'r' => ChannelId::R,
                'g' => ChannelId::G,
                'b' => ChannelId::B,
                'n' => ChannelId::Nir,
                'l' => ChannelId::L,
                'p' => {
                    // `p1234` carries several indices after one `p`
                    let mut any = false;
                    while let Some(d) = chars.peek().and_then(|d| d.to_digit(10)) {
                        chars.next();
                        any = true;
                        ids.push(match d {
                            1 => ChannelId::P1,
                            2 => ChannelId::P2,
                            3 => ChannelId::P3,
                            4 => ChannelId::P4,
                            _ => {
                                return Err(Error::InvalidParameter(format!(
                                    "bad PCA channel index {d} in `{suffix}`"
                                )))
                            }
                        });
                    }
                    if !any {
                        return Err(Error::InvalidParameter(format!(
                            "`p` without index in `{suffix}`"
                        )));
                    }
                    continue;
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown channel `{c}` in `{suffix}`"
                    )))
                }
            };
            ids.push(id);
        }
        ChannelSet::new(ids)
    }

    pub fn ids(&self) -> &[ChannelId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn needs_nir(&self) -> bool {
        self.0.iter().any(|c| c.needs_nir())
    }

    pub fn needs_pca(&self) -> bool {
        self.0.iter().any(|c| c.is_pca())
    }

    /// Compact notation, inverse of [`ChannelSet::from_suffix`].
    pub fn suffix(&self) -> String {
        let mut out = String::new();
        let mut in_p = false;
        for id in &self.0 {
            let s = id.suffix();
            if id.is_pca() && in_p {
                out.push_str(&s[1..]);
            } else {
                out.push_str(s);
            }
            in_p = id.is_pca();
        }
        out
    }
}

impl TryFrom<Vec<ChannelId>> for ChannelSet {
    type Error = Error;

    fn try_from(ids: Vec<ChannelId>) -> Result<Self> {
        ChannelSet::new(ids)
    }
}

impl From<ChannelSet> for Vec<ChannelId> {
    fn from(set: ChannelSet) -> Self {
        set.0
    }
}

/// Per-pixel luma `0.299 R + 0.587 G + 0.114 B`, clamped to `[0, 1]`.
pub fn compute_luma(img: &MultiChannelImage) -> Result<Plane> {
    let r = img.channel(ChannelId::R)?.data();
    let g = img.channel(ChannelId::G)?.data();
    let b = img.channel(ChannelId::B)?.data();
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| {
            (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0)
        })
        .collect();
    Plane::new(img.width(), img.height(), data)
}

/// PCA of the per-pixel RGBN vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPca {
    pub mean: [f64; 4],
    /// Rows are principal directions, by non-increasing eigenvalue.
    pub basis: [[f64; 4]; 4],
    pub eigenvalues: [f64; 4],
    /// Range of each projection over the training sample, used to map the
    /// projected planes onto `[0, 1]`.
    pub proj_min: [f64; 4],
    pub proj_max: [f64; 4],
    pub seed: u64,
    pub sample_budget: usize,
}

impl ChannelPca {
    /// Centered projection onto the principal directions.
    pub fn project(&self, pixel: [f64; 4]) -> [f64; 4] {
        let centered: Vec<f64> = pixel.iter().zip(&self.mean).map(|(p, m)| p - m).collect();
        std::array::from_fn(|k| linalg::dot(&self.basis[k], &centered))
    }

    /// Inverse of [`ChannelPca::project`].
    pub fn reconstruct(&self, coeffs: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|c| {
            self.mean[c] + (0..4).map(|k| self.basis[k][c] * coeffs[k]).sum::<f64>()
        })
    }

    fn rescale(&self, k: usize, value: f64) -> f64 {
        let span = self.proj_max[k] - self.proj_min[k];
        if span <= 0.0 {
            0.0
        } else {
            ((value - self.proj_min[k]) / span).clamp(0.0, 1.0)
        }
    }
}

/// Fits the RGBN channel PCA on up to `sample_budget` pixels drawn uniformly
/// (seeded) across `images`.
pub fn fit_channel_pca(
    images: &[&MultiChannelImage],
    sample_budget: usize,
    seed: u64,
) -> Result<ChannelPca> {
    if sample_budget < 16 {
        return Err(Error::InvalidParameter(format!(
            "channel PCA sample budget must be at least 16, got {sample_budget}"
        )));
    }
    if images.iter().any(|img| !img.has_nir()) {
        return Err(Error::MissingNir);
    }
    let sizes: Vec<usize> = images.iter().map(|img| img.width() * img.height()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }

    let mut picks: Vec<usize> = if total <= sample_budget {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, total, sample_budget).into_vec()
    };
    picks.sort_unstable();

    let mut samples = Vec::with_capacity(picks.len());
    let mut image_idx = 0;
    let mut offset = 0;
    for global in picks {
        while global >= offset + sizes[image_idx] {
            offset += sizes[image_idx];
            image_idx += 1;
        }
        samples.push(images[image_idx].rgbn(global - offset)?);
    }

    let (mean, cov) = linalg::mean_and_covariance(samples.iter().map(|s| s.as_slice()), 4);
    let (values, vectors) = linalg::symmetric_eigen(&cov, 4);

    let mut pca = ChannelPca {
        mean: std::array::from_fn(|i| mean[i]),
        basis: std::array::from_fn(|k| std::array::from_fn(|c| vectors[k][c])),
        eigenvalues: std::array::from_fn(|k| values[k]),
        proj_min: [f64::INFINITY; 4],
        proj_max: [f64::NEG_INFINITY; 4],
        seed,
        sample_budget,
    };
    for s in &samples {
        let p = pca.project(*s);
        for k in 0..4 {
            pca.proj_min[k] = pca.proj_min[k].min(p[k]);
            pca.proj_max[k] = pca.proj_max[k].max(p[k]);
        }
    }
    Ok(pca)
}

/// Attaches `P1..P4` planes to `img` in place.
pub fn attach_channel_pca(img: &mut MultiChannelImage, pca: &ChannelPca) -> Result<()> {
    if !img.has_nir() {
        return Err(Error::MissingNir);
    }
    let n = img.width() * img.height();
    let mut planes: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    for idx in 0..n {
        let p = pca.project(img.rgbn(idx)?);
        for k in 0..4 {
            planes[k].push(pca.rescale(k, p[k]));
        }
    }
    for (k, data) in planes.into_iter().enumerate() {
        img.insert_derived(ChannelId::PCA[k], Plane::new(img.width(), img.height(), data)?)?;
    }
    Ok(())
}

/// Returns a copy of `img` with the `P1..P4` planes added.
pub fn apply_channel_pca(img: &MultiChannelImage, pca: &ChannelPca) -> Result<MultiChannelImage> {
    let mut out = img.clone();
    attach_channel_pca(&mut out, pca)?;
    Ok(out)
}

/// Makes sure every channel in `set` is present on `img`, deriving luma and
/// PCA planes on demand.
pub fn ensure_channels(
    img: &mut MultiChannelImage,
    set: &ChannelSet,
    pca: Option<&ChannelPca>,
) -> Result<()> {
    for &id in set.ids() {
        if img.has(id) {
            continue;
        }
        match id {
            ChannelId::L => {
                let luma = compute_luma(img)?;
                img.insert_derived(ChannelId::L, luma)?;
            }
            id if id.is_pca() => {
                let pca = pca.ok_or(Error::MissingChannel(id))?;
                if !img.has_nir() {
                    return Err(Error::MissingChannel(ChannelId::Nir));
                }
                attach_channel_pca(img, pca)?;
            }
            other => return Err(Error::MissingChannel(other)),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image_from_pixels(pixels: &[[f64; 4]], width: usize) -> MultiChannelImage {
        let height = pixels.len() / width;
        let plane = |c: usize| {
            Plane::new(width, height, pixels.iter().map(|p| p[c]).collect()).unwrap()
        };
        MultiChannelImage::new("t", plane(0), plane(1), plane(2), Some(plane(3))).unwrap()
    }

    #[test]
    fn luma_values() {
        let img = image_from_pixels(
            &[[1.0, 1.0, 1.0, 0.0], [0.3, 0.3, 0.3, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0; 4]],
            4,
        );
        let l = compute_luma(&img).unwrap();
        assert!((l.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((l.get(1, 0) - 0.3).abs() < 1e-12);
        assert_eq!(l.get(2, 0), 0.299);
        assert_eq!(l.get(3, 0), 0.0);
    }

    #[test]
    fn suffix_parsing() {
        use ChannelId::*;
        assert_eq!(ChannelSet::from_suffix("rgbn").unwrap().ids(), &[R, G, B, Nir]);
        assert_eq!(ChannelSet::from_suffix("p1234").unwrap().ids(), &[P1, P2, P3, P4]);
        assert_eq!(ChannelSet::from_suffix("p1").unwrap().ids(), &[P1]);
        assert_eq!(ChannelSet::from_suffix("p1234").unwrap().suffix(), "p1234");
        assert!(ChannelSet::from_suffix("rr").is_err());
        assert!(ChannelSet::from_suffix("").is_err());
        assert!(ChannelSet::from_suffix("p").is_err());
    }

    #[test]
    fn identical_pixels_have_zero_eigenvalues() {
        let px = [0.2, 0.4, 0.6, 0.8];
        let img = image_from_pixels(&[px; 20], 5);
        let pca = fit_channel_pca(&[&img], 100, 1).unwrap();
        assert!(pca.eigenvalues.iter().all(|&v| v.abs() < 1e-24), "{:?}", pca.eigenvalues);
        for c in 0..4 {
            assert!((pca.mean[c] - px[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn nir_only_variance_gives_nir_axis() {
        let pixels: Vec<[f64; 4]> = (0..32).map(|i| [0.5, 0.5, 0.5, i as f64 / 31.0]).collect();
        let img = image_from_pixels(&pixels, 8);
        let pca = fit_channel_pca(&[&img], 64, 1).unwrap();
        let first = pca.basis[0];
        assert!((first[3].abs() - 1.0).abs() < 1e-12);
        assert!(first[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn missing_nir_is_an_error() {
        let p = Plane::filled(4, 4, 0.5);
        let img = MultiChannelImage::new("x", p.clone(), p.clone(), p, None).unwrap();
        assert!(matches!(fit_channel_pca(&[&img], 32, 0), Err(Error::MissingNir)));
        let pca = ChannelPca {
            mean: [0.0; 4],
            basis: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
            eigenvalues: [0.0; 4],
            proj_min: [0.0; 4],
            proj_max: [1.0; 4],
            seed: 0,
            sample_budget: 16,
        };
        assert!(matches!(apply_channel_pca(&img, &pca), Err(Error::MissingNir)));
    }

    #[test]
    fn identity_basis_reproduces_channels() {
        let pixels: Vec<[f64; 4]> = (0..16)
            .map(|i| {
                let t = i as f64 / 15.0;
                [t, 1.0 - t, t * t, 0.5]
            })
            .collect();
        let img = image_from_pixels(&pixels, 4);
        let pca = ChannelPca {
            mean: [0.0; 4],
            basis: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
            eigenvalues: [0.0; 4],
            proj_min: [0.0; 4],
            proj_max: [1.0; 4],
            seed: 0,
            sample_budget: 16,
        };
        for px in &pixels {
            assert_eq!(pca.project(*px), *px);
        }
        let out = apply_channel_pca(&img, &pca).unwrap();
        let p1 = out.channel(ChannelId::P1).unwrap();
        assert_eq!(p1.data(), img.channel(ChannelId::R).unwrap().data());
    }

    #[test]
    fn mean_pixel_projects_to_origin() {
        let pixels: Vec<[f64; 4]> = (0..64)
            .map(|i| {
                let t = (i as f64 * 0.37).sin() * 0.5 + 0.5;
                [t, (t * 3.0).fract(), 0.2, 1.0 - t]
            })
            .collect();
        let img = image_from_pixels(&pixels, 8);
        let pca = fit_channel_pca(&[&img], 64, 3).unwrap();
        let p = pca.project(pca.mean);
        assert!(p.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn application_preserves_raw_planes_and_range() {
        let pixels: Vec<[f64; 4]> = (0..100)
            .map(|i| {
                let t = i as f64 / 99.0;
                [t, (t * 7.0).fract(), 1.0 - t, (t * 3.0).fract()]
            })
            .collect();
        let img = image_from_pixels(&pixels, 10);
        let pca = fit_channel_pca(&[&img], 50, 9).unwrap();
        let out = apply_channel_pca(&img, &pca).unwrap();
        assert_eq!((out.width(), out.height()), (10, 10));
        for c in [ChannelId::R, ChannelId::G, ChannelId::B, ChannelId::Nir] {
            assert_eq!(out.channel(c).unwrap(), img.channel(c).unwrap());
        }
        for c in ChannelId::PCA {
            assert!(out.channel(c).unwrap().data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    fn orthonormalize(raw: [[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
        let mut out = [[0.0; 4]; 4];
        for k in 0..4 {
            let mut v = raw[k];
            for prev in out.iter().take(k) {
                let d = linalg::dot(&v, prev);
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= d * p);
            }
            let n = linalg::dot(&v, &v).sqrt();
            if n < 1e-3 {
                return None;
            }
            v.iter_mut().for_each(|x| *x /= n);
            out[k] = v;
        }
        Some(out)
    }

    proptest! {
        #[test]
        fn projection_round_trips_and_preserves_total_variance(
            raw in prop::array::uniform4(prop::array::uniform4(-1.0f64..1.0)),
            pixels in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 8..40),
        ) {
            let Some(basis) = orthonormalize(raw) else { return Ok(()); };
            let (mean, _) = linalg::mean_and_covariance(pixels.iter().map(|p| p.as_slice()), 4);
            let pca = ChannelPca {
                mean: std::array::from_fn(|i| mean[i]),
                basis,
                eigenvalues: [0.0; 4],
                proj_min: [0.0; 4],
                proj_max: [1.0; 4],
                seed: 0,
                sample_budget: 16,
            };
            let n = pixels.len() as f64;
            let mut var_in = 0.0;
            let mut var_out = 0.0;
            for px in &pixels {
                let p = pca.project(*px);
                let back = pca.reconstruct(p);
                for c in 0..4 {
                    prop_assert!((back[c] - px[c]).abs() < 1e-6);
                    var_in += (px[c] - mean[c]).powi(2) / n;
                    var_out += p[c].powi(2) / n;
                }
            }
            prop_assert!((var_in - var_out).abs() < 1e-6);
        }
    }
}
