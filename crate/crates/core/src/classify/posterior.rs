use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::Mode;
use crate::patches::PatchSpec;

/// Per-pixel class probabilities, pixel-major.
///
/// Probabilities come from independent one-vs-all heads and need not sum
/// to one. After [`apply_background_rule`] an extra trailing entry holds the
/// constant background probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnaryField {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub has_background: bool,
    pub probs: Vec<f64>,
}

impl UnaryField {
    pub fn new(width: usize, height: usize, num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != width * height * num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} field given {} values",
                width,
                height,
                num_classes,
                probs.len()
            )));
        }
        Ok(UnaryField {
            width,
            height,
            num_classes,
            has_background: false,
            probs,
        })
    }

    /// Labels per pixel including the background slot if present.
    pub fn num_labels(&self) -> usize {
        self.num_classes + usize::from(self.has_background)
    }

    pub fn pixel(&self, idx: usize) -> &[f64] {
        let l = self.num_labels();
        &self.probs[idx * l..(idx + 1) * l]
    }

    /// Background label id, when the rule has been applied.
    pub fn background_label(&self) -> Option<usize> {
        self.has_background.then_some(self.num_classes)
    }

    /// Most probable label per pixel. Ties go to the lowest class index,
    /// except that background wins any tie it takes part in.
    pub fn argmax(&self) -> Vec<u8> {
        (0..self.width * self.height)
            .map(|i| {
                let p = self.pixel(i);
                let mut best = 0;
                for k in 1..self.num_classes {
                    if p[k] > p[best] {
                        best = k;
                    }
                }
                if self.has_background && p[self.num_classes] >= p[best] {
                    best = self.num_classes;
                }
                best as u8
            })
            .collect()
    }
}

/// Gaussian weight of a pixel with respect to a patch: `sigma = side / 4`.
fn patch_weight(spec: &PatchSpec, x: usize, y: usize) -> f64 {
    let sigma = spec.side as f64 / 4.0;
    let dx = x as f64 - spec.cx as f64;
    let dy = y as f64 - spec.cy as f64;
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

/// Distance-weighted average of the probabilities of every patch whose
/// window contains the pixel.
pub fn aggregate_pixel_posteriors(
    patch_probs: &[(PatchSpec, Vec<f64>)],
    width: usize,
    height: usize,
) -> Result<UnaryField> {
    let num_classes = patch_probs
        .first()
        .map(|(_, p)| p.len())
        .ok_or(Error::UncoveredPixel { x: 0, y: 0 })?;
    let mut acc = vec![0.0; width * height * num_classes];
    let mut norm = vec![0.0; width * height];
    for (spec, probs) in patch_probs {
        if probs.len() != num_classes {
            return Err(Error::VectorDimension {
                expected: num_classes,
                actual: probs.len(),
            });
        }
        let (xs, ys) = spec.clipped(width, height);
        for y in ys {
            for x in xs.clone() {
                let w = patch_weight(spec, x, y);
                let idx = y * width + x;
                norm[idx] += w;
                let out = &mut acc[idx * num_classes..(idx + 1) * num_classes];
                for (o, p) in out.iter_mut().zip(probs) {
                    *o += w * p;
                }
            }
        }
    }
    for (idx, &n) in norm.iter().enumerate() {
        if n <= 0.0 {
            return Err(Error::UncoveredPixel {
                x: idx % width,
                y: idx / width,
            });
        }
        acc[idx * num_classes..(idx + 1) * num_classes]
            .iter_mut()
            .for_each(|v| *v /= n);
    }
    UnaryField::new(width, height, num_classes, acc)
}

/// Adds a background pseudo-class with constant probability `threshold`.
pub fn apply_background_rule(field: &UnaryField, threshold: f64, mode: Mode) -> Result<UnaryField> {
    if mode != Mode::IndoorBackground {
        return Err(Error::WrongMode);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "background threshold {threshold} outside (0, 1)"
        )));
    }
    if field.has_background {
        return Err(Error::InvalidParameter("background rule already applied".into()));
    }
    let k = field.num_classes;
    let mut probs = Vec::with_capacity(field.width * field.height * (k + 1));
    for px in field.probs.chunks(k) {
        probs.extend_from_slice(px);
        probs.push(threshold);
    }
    Ok(UnaryField {
        width: field.width,
        height: field.height,
        num_classes: k,
        has_background: true,
        probs,
    })
}

/// Arithmetic mean of the per-class probabilities of several streams.
///
/// Each entry is summed in sorted order so the result does not depend on
/// the order of `fields`.
pub fn late_fuse(fields: &[UnaryField]) -> Result<UnaryField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::ShapeMismatch("nothing to fuse".into()))?;
    for f in &fields[1..] {
        if (f.width, f.height, f.num_classes, f.has_background)
            != (first.width, first.height, first.num_classes, first.has_background)
        {
            return Err(Error::ShapeMismatch(format!(
                "cannot fuse {}x{}x{} with {}x{}x{}",
                first.width, first.height, first.num_labels(), f.width, f.height, f.num_labels()
            )));
        }
    }
    if fields.len() == 1 {
        return Ok(first.clone());
    }
    let n = fields.len() as f64;
    let mut column = Vec::with_capacity(fields.len());
    let probs = (0..first.probs.len())
        .map(|i| {
            column.clear();
            column.extend(fields.iter().map(|f| f.probs[i]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect();
    Ok(UnaryField {
        probs,
        ..first.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_patch_vectors_give_identical_pixels() {
        let v = vec![0.2, 0.7, 0.4];
        let patches: Vec<(PatchSpec, Vec<f64>)> = crate::patches::grid_patches(40, 36)
            .unwrap()
            .into_iter()
            .map(|s| (s, v.clone()))
            .collect();
        let field = aggregate_pixel_posteriors(&patches, 40, 36).unwrap();
        for i in 0..40 * 36 {
            for (a, b) in field.pixel(i).iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_patch_center_pixel() {
        let spec = PatchSpec::new(16, 16, 0);
        let field = aggregate_pixel_posteriors(&[(spec, vec![0.3, 0.9])], 32, 32).unwrap();
        assert_eq!(field.pixel(16 * 32 + 16), &[0.3, 0.9]);
    }

    #[test]
    fn two_overlapping_patches_hand_computed() {
        // pixel (20, 16): distance 4 to (16,16) side 32 (sigma 8),
        // distance 6 to (26,16) side 32 (sigma 8)
        let a = PatchSpec::new(16, 16, 0);
        let b = PatchSpec::new(26, 16, 0);
        let field = aggregate_pixel_posteriors(&[(a, vec![0.2]), (b, vec![0.8])], 42, 32).unwrap();
        let wa = (-16.0f64 / 128.0).exp();
        let wb = (-36.0f64 / 128.0).exp();
        let expected = (wa * 0.2 + wb * 0.8) / (wa + wb);
        assert!((field.pixel(16 * 42 + 20)[0] - expected).abs() < 1e-9);
        // pixel (5, 5) is only inside patch a
        assert!((field.pixel(5 * 42 + 5)[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn uncovered_pixel_is_an_error() {
        let spec = PatchSpec::new(16, 16, 0);
        assert!(matches!(
            aggregate_pixel_posteriors(&[(spec, vec![0.5])], 40, 32),
            Err(Error::UncoveredPixel { x: 32, y: 0 })
        ));
    }

    fn field(probs: Vec<f64>, k: usize) -> UnaryField {
        let n = probs.len() / k;
        UnaryField::new(n, 1, k, probs).unwrap()
    }

    #[test]
    fn background_rule_cases() {
        let f = field(vec![0.3, 0.4, 0.9, 0.2, 0.5, 0.1], 2);
        let b = apply_background_rule(&f, 0.5, Mode::IndoorBackground).unwrap();
        assert_eq!(b.argmax(), vec![2, 0, 2]);
        for i in 0..3 {
            assert_eq!(&b.pixel(i)[..2], f.pixel(i));
            assert_eq!(b.pixel(i)[2], 0.5);
        }
        assert!(matches!(
            apply_background_rule(&f, 0.5, Mode::OutdoorVoid),
            Err(Error::WrongMode)
        ));
    }

    #[test]
    fn argmax_ties_pick_lowest_class() {
        let f = field(vec![0.4, 0.6, 0.6], 3);
        assert_eq!(f.argmax(), vec![1]);
    }

    #[test]
    fn fusion_cases() {
        let a = field(vec![0.2, 0.6], 2);
        let b = field(vec![0.8, 0.6], 2);
        assert_eq!(late_fuse(&[a.clone(), a.clone()]).unwrap(), a);
        let ab = late_fuse(&[a.clone(), b.clone()]).unwrap();
        assert!((ab.probs[0] - 0.5).abs() < 1e-15);
        let c = field(vec![0.5, 0.1], 2);
        let abc = late_fuse(&[a.clone(), b.clone(), c.clone()]).unwrap();
        assert!((abc.probs[0] - 1.5 / 3.0).abs() < 1e-12);
        assert!((abc.probs[1] - 1.3 / 3.0).abs() < 1e-12);
        let wrong = field(vec![0.5, 0.1, 0.3], 3);
        assert!(matches!(late_fuse(&[a, wrong]), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn fusion_is_order_independent(
            a in prop::collection::vec(0.0f64..1.0, 6),
            b in prop::collection::vec(0.0f64..1.0, 6),
            c in prop::collection::vec(0.0f64..1.0, 6),
        ) {
            let (fa, fb, fc) = (field(a, 3), field(b, 3), field(c, 3));
            let x = late_fuse(&[fa.clone(), fb.clone(), fc.clone()]).unwrap();
            let y = late_fuse(&[fc, fa, fb]).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn aggregation_weights_normalize(
            values in prop::collection::vec(0.0f64..1.0, 20),
        ) {
            // every pixel's posterior is a convex combination, so it lies
            // between the extreme patch values
            let specs = crate::patches::grid_patches(32, 32).unwrap();
            let patches: Vec<_> = specs.into_iter().zip(values.iter()).map(|(s, &v)| (s, vec![v])).collect();
            let field = aggregate_pixel_posteriors(&patches, 32, 32).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for p in &field.probs {
                prop_assert!(*p >= lo - 1e-9 && *p <= hi + 1e-9);
            }
        }
    }
}
