use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::crf::Labeling;
use crate::error::{Error, Result};
use crate::imageio::LabelMask;

/// Overall accuracy restricted to narrow bands around ground-truth contours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimapCurve {
    pub radii: Vec<usize>,
    pub accuracy: Vec<f64>,
    /// Band size per radius, pooled over the dataset.
    pub band_pixels: Vec<u64>,
}

/// Chebyshev distance from every pixel to the nearest boundary pixel, or
/// `None` when the image has no boundary. A boundary pixel is a non-void
/// pixel with a non-void 4-neighbor of a different label.
pub fn boundary_distance(gt: &LabelMask) -> Option<Vec<usize>> {
    let (w, h) = (gt.width, gt.height);
    let mut dist = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = gt.labels[i];
            if gt.is_void(l) {
                continue;
            }
            let differs = |j: usize| {
                let m = gt.labels[j];
                !gt.is_void(m) && m != l
            };
            let boundary = (x > 0 && differs(i - 1))
                || (x + 1 < w && differs(i + 1))
                || (y > 0 && differs(i - w))
                || (y + 1 < h && differs(i + w));
            if boundary {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
    }
    if queue.is_empty() {
        return None;
    }
    // multi-source BFS over the 8-neighborhood yields Chebyshev distance
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    Some(dist)
}

/// Pooled trimap accuracy. The band of radius `r` holds the non-void pixels
/// whose Chebyshev distance to a boundary pixel is below `r`, so radius 1 is
/// the boundary pixels themselves.
pub fn trimap_curve(pairs: &[(&Labeling, &LabelMask)], radii: &[usize]) -> Result<TrimapCurve> {
    if radii.is_empty() || radii[0] == 0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "trimap radii must be positive and strictly increasing".into(),
        ));
    }
    let mut band = vec![0u64; radii.len()];
    let mut correct = vec![0u64; radii.len()];
    for (pred, gt) in pairs {
        if (pred.width, pred.height) != (gt.width, gt.height) {
            return Err(Error::ShapeMismatch(format!(
                "prediction is {}x{} but ground truth is {}x{}",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        let Some(dist) = boundary_distance(gt) else {
            continue;
        };
        for (i, &d) in dist.iter().enumerate() {
            let g = gt.labels[i];
            if gt.is_void(g) {
                continue;
            }
            let hit = pred.labels[i] == g;
            for (k, &r) in radii.iter().enumerate() {
                if d < r {
                    band[k] += 1;
                    correct[k] += u64::from(hit);
                }
            }
        }
    }
    if band.contains(&0) {
        return Err(Error::EmptyBand);
    }
    Ok(TrimapCurve {
        radii: radii.to_vec(),
        accuracy: correct.iter().zip(&band).map(|(&c, &b)| c as f64 / b as f64).collect(),
        band_pixels: band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::Mode;

    fn half_half() -> LabelMask {
        let labels = (0..16).map(|i| u8::from(i % 4 >= 2)).collect();
        LabelMask::new(4, 4, labels, 2, Mode::OutdoorVoid).unwrap()
    }

    #[test]
    fn flipped_boundary_pixel() {
        let gt = half_half();
        let mut pred = Labeling::new(4, 4, gt.labels.clone()).unwrap();
        pred.labels[4 + 1] = 1;
        let curve = trimap_curve(&[(&pred, &gt)], &[1, 2]).unwrap();
        assert_eq!(curve.band_pixels, vec![8, 16]);
        assert_eq!(curve.accuracy, vec![7.0 / 8.0, 15.0 / 16.0]);
    }

    #[test]
    fn uniform_gt_has_no_band() {
        let gt = LabelMask::new(3, 3, vec![1; 9], 2, Mode::OutdoorVoid).unwrap();
        let pred = Labeling::uniform(3, 3, 1);
        assert!(matches!(trimap_curve(&[(&pred, &gt)], &[1]), Err(Error::EmptyBand)));
    }

    #[test]
    fn void_does_not_create_boundaries() {
        let gt = LabelMask::new(3, 1, vec![0, 255, 0], 2, Mode::OutdoorVoid).unwrap();
        assert!(boundary_distance(&gt).is_none());
    }

    #[test]
    fn perfect_prediction_and_nesting() {
        let gt = half_half();
        let pred = Labeling::new(4, 4, gt.labels.clone()).unwrap();
        let curve = trimap_curve(&[(&pred, &gt)], &[1, 2, 3]).unwrap();
        assert!(curve.accuracy.iter().all(|&a| a == 1.0));
        assert!(curve.band_pixels.windows(2).all(|w| w[0] <= w[1]));
        assert!(trimap_curve(&[(&pred, &gt)], &[2, 1]).is_err());
    }
}
