//! Dense multi-scale patch grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::Plane;

/// Side of the resampled tile every descriptor works on.
pub const TILE_SIDE: usize = 32;
pub const TILE_AREA: usize = TILE_SIDE * TILE_SIDE;
pub const GRID_STRIDE: usize = 10;
pub const GRID_ORIGIN: usize = 16;
pub const NUM_SCALES: usize = 5;

/// Patch side for each scale: `round(32 * sqrt(2)^s)`.
pub fn scale_side(scale_index: usize) -> usize {
    (TILE_SIDE as f64 * std::f64::consts::SQRT_2.powi(scale_index as i32)).round() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    pub cx: usize,
    pub cy: usize,
    pub scale_index: usize,
    pub side: usize,
}

impl PatchSpec {
    pub fn new(cx: usize, cy: usize, scale_index: usize) -> Self {
        PatchSpec {
            cx,
            cy,
            scale_index,
            side: scale_side(scale_index),
        }
    }

    /// Top-left corner of the window; may be negative near the border.
    pub fn origin(&self) -> (isize, isize) {
        let half = (self.side / 2) as isize;
        (self.cx as isize - half, self.cy as isize - half)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (x0, y0) = self.origin();
        let (x, y) = (x as isize, y as isize);
        let s = self.side as isize;
        x >= x0 && x < x0 + s && y >= y0 && y < y0 + s
    }

    /// The window clipped to a `width x height` image, as half-open ranges.
    pub fn clipped(&self, width: usize, height: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (x0, y0) = self.origin();
        let s = self.side as isize;
        let xs = x0.max(0) as usize..((x0 + s).min(width as isize)).max(0) as usize;
        let ys = y0.max(0) as usize..((y0 + s).min(height as isize)).max(0) as usize;
        (xs, ys)
    }
}

/// Grid centers along one axis: `16, 26, 36, ...` while inside the image.
fn axis_centers(len: usize) -> impl Iterator<Item = usize> {
    (GRID_ORIGIN..len).step_by(GRID_STRIDE)
}

/// Number of grid centers per scale for an image of the given size.
pub fn centers_per_scale(width: usize, height: usize) -> usize {
    axis_centers(width).count() * axis_centers(height).count()
}

/// All patches of the dense grid, scale-major then row-major.
pub fn grid_patches(width: usize, height: usize) -> Result<Vec<PatchSpec>> {
    if width < TILE_SIDE || height < TILE_SIDE {
        return Err(Error::ImageTooSmall { width, height });
    }
    let mut out = Vec::with_capacity(NUM_SCALES * centers_per_scale(width, height));
    for scale in 0..NUM_SCALES {
        for cy in axis_centers(height) {
            for cx in axis_centers(width) {
                out.push(PatchSpec::new(cx, cy, scale));
            }
        }
    }
    Ok(out)
}

/// A 32x32 resampled patch, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile(Vec<f64>);

impl Tile {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut v = Vec::with_capacity(TILE_AREA);
        for y in 0..TILE_SIDE {
            for x in 0..TILE_SIDE {
                v.push(f(x, y));
            }
        }
        Tile(v)
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() != TILE_AREA {
            return Err(Error::VectorDimension {
                expected: TILE_AREA,
                actual: values.len(),
            });
        }
        Ok(Tile(values))
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[y * TILE_SIDE + x]
    }

    #[inline]
    pub(crate) fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let last = TILE_SIDE as isize - 1;
        self.0[y.clamp(0, last) as usize * TILE_SIDE + x.clamp(0, last) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Bilinear sample with edge clamping.
fn bilinear(plane: &Plane, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let top = plane.get_clamped(xi, yi) * (1.0 - fx) + plane.get_clamped(xi + 1, yi) * fx;
    if fy == 0.0 {
        return top;
    }
    let bottom =
        plane.get_clamped(xi, yi + 1) * (1.0 - fx) + plane.get_clamped(xi + 1, yi + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples the edge-clamped `side x side` window of `spec` to 32x32.
pub fn extract_patch(plane: &Plane, spec: &PatchSpec) -> Tile {
    let (x0, y0) = spec.origin();
    if spec.side == TILE_SIDE {
        return Tile::from_fn(|u, v| plane.get_clamped(x0 + u as isize, y0 + v as isize));
    }
    let step = spec.side as f64 / TILE_SIDE as f64;
    Tile::from_fn(|u, v| {
        let sx = x0 as f64 + (u as f64 + 0.5) * step - 0.5;
        let sy = y0 as f64 + (v as f64 + 0.5) * step - 0.5;
        bilinear(plane, sx, sy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sides_follow_sqrt2_series() {
        let sides: Vec<usize> = (0..NUM_SCALES).map(scale_side).collect();
        assert_eq!(sides, vec![32, 45, 64, 91, 128]);
        assert_eq!(scale_side(4), 4 * 32);
    }

    #[test]
    fn smallest_image_grid() {
        let patches = grid_patches(32, 32).unwrap();
        assert_eq!(patches.len(), 20);
        for scale in 0..NUM_SCALES {
            let mut centers: Vec<(usize, usize)> = patches
                .iter()
                .filter(|p| p.scale_index == scale)
                .map(|p| (p.cx, p.cy))
                .collect();
            centers.sort();
            assert_eq!(centers, vec![(16, 16), (16, 26), (26, 16), (26, 26)]);
        }
    }

    #[test]
    fn too_small() {
        assert!(matches!(grid_patches(31, 31), Err(Error::ImageTooSmall { .. })));
        assert!(matches!(grid_patches(64, 31), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn count_is_identical_across_scales() {
        for (w, h) in [(32, 40), (57, 100), (64, 64), (121, 33)] {
            let patches = grid_patches(w, h).unwrap();
            let per = centers_per_scale(w, h);
            assert_eq!(per, (w - 16).div_ceil(10) * (h - 16).div_ceil(10));
            for s in 0..NUM_SCALES {
                assert_eq!(patches.iter().filter(|p| p.scale_index == s).count(), per);
            }
            assert!(patches.iter().all(|p| p.cx < w && p.cy < h));
        }
    }

    #[test]
    fn constant_plane_gives_constant_tile() {
        let plane = Plane::filled(40, 40, 0.37);
        for s in 0..NUM_SCALES {
            let tile = extract_patch(&plane, &PatchSpec::new(16, 26, s));
            assert!(tile.values().iter().all(|&v| (v - 0.37).abs() < 1e-15));
        }
    }

    #[test]
    fn finest_scale_inside_is_raw_window() {
        let plane = Plane::from_fn(80, 70, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0);
        let spec = PatchSpec::new(36, 46, 0);
        let tile = extract_patch(&plane, &spec);
        for v in 0..TILE_SIDE {
            for u in 0..TILE_SIDE {
                assert_eq!(tile.get(u, v), plane.get(20 + u, 30 + v));
            }
        }
    }

    #[test]
    fn ramp_stays_linear_at_every_scale() {
        let plane = Plane::from_fn(300, 300, |x, _| x as f64 / 299.0);
        for s in 0..NUM_SCALES {
            let spec = PatchSpec::new(150, 150, s);
            let tile = extract_patch(&plane, &spec);
            let slope = (tile.get(31, 0) - tile.get(0, 0)) / 31.0;
            let expected_slope = spec.side as f64 / TILE_SIDE as f64 / 299.0;
            assert!((slope - expected_slope).abs() < 1e-3);
            for v in 0..TILE_SIDE {
                for u in 0..TILE_SIDE {
                    assert!((tile.get(u, v) - tile.get(u, 0)).abs() < 1e-12);
                    assert!((tile.get(u, v) - (tile.get(0, 0) + slope * u as f64)).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn border_patch_uses_edge_clamp() {
        let plane = Plane::from_fn(32, 32, |x, _| x as f64 / 31.0);
        let tile = extract_patch(&plane, &PatchSpec::new(26, 16, 0));
        // window spans x = 10..42, columns past 31 replicate the last column
        assert_eq!(tile.get(21, 0), 1.0);
        assert_eq!(tile.get(31, 5), 1.0);
        assert_eq!(tile.get(0, 0), 10.0 / 31.0);
    }

    #[test]
    fn contains_and_clip() {
        let p = PatchSpec::new(16, 16, 4);
        assert_eq!(p.origin(), (-48, -48));
        assert!(p.contains(0, 0) && p.contains(79, 79) && !p.contains(80, 0));
        let (xs, ys) = p.clipped(50, 60);
        assert_eq!((xs, ys), (0..50, 0..60));
    }
}
