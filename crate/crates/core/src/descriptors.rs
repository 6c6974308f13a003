//! Dense upright SIFT and local color statistics (COL) on 32x32 tiles, and
//! their concatenation over channel sets.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelSet;
use crate::error::{Error, Result};
use crate::imageio::MultiChannelImage;
use crate::patches::{extract_patch, PatchSpec, Tile, TILE_SIDE};

pub const GRID_CELLS: usize = 4;
pub const CELL_SIDE: usize = TILE_SIDE / GRID_CELLS;
pub const ORIENTATION_BINS: usize = 8;
pub const SIFT_DIM: usize = GRID_CELLS * GRID_CELLS * ORIENTATION_BINS;
pub const COL_DIM: usize = GRID_CELLS * GRID_CELLS * 2;

const SIFT_CLAMP: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DescriptorKind {
    #[serde(rename = "SIFT")]
    Sift,
    #[serde(rename = "COL")]
    Col,
}

impl DescriptorKind {
    pub fn per_channel_dim(self) -> usize {
        match self {
            DescriptorKind::Sift => SIFT_DIM,
            DescriptorKind::Col => COL_DIM,
        }
    }

    pub fn describe(self, tile: &Tile) -> Vec<f64> {
        match self {
            DescriptorKind::Sift => sift_descriptor(tile),
            DescriptorKind::Col => col_descriptor(tile),
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Sift => "SIFT",
            DescriptorKind::Col => "COL",
        })
    }
}

/// A descriptor family computed on a channel set, e.g. `SIFT_rgbn`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DescriptorSpec {
    pub kind: DescriptorKind,
    pub channels: ChannelSet,
}

/// The descriptor variants compared in the experiments.
pub const NAMED_VARIANTS: [&str; 9] = [
    "COL_rgb",
    "COL_rgbn",
    "COL_p1234",
    "SIFT_l",
    "SIFT_n",
    "SIFT_p1",
    "SIFT_rgb",
    "SIFT_rgbn",
    "SIFT_p1234",
];

impl DescriptorSpec {
    pub fn new(kind: DescriptorKind, channels: ChannelSet) -> Self {
        DescriptorSpec { kind, channels }
    }

    /// Parses `KIND_suffix`, e.g. `COL_rgbn` or `SIFT_p1234`.
    pub fn parse(name: &str) -> Result<Self> {
        let (kind, suffix) = name
            .split_once('_')
            .ok_or_else(|| Error::InvalidParameter(format!("bad descriptor name `{name}`")))?;
        let kind = match kind.to_ascii_uppercase().as_str() {
            "SIFT" => DescriptorKind::Sift,
            "COL" => DescriptorKind::Col,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown descriptor kind `{other}`"
                )))
            }
        };
        Ok(DescriptorSpec::new(kind, ChannelSet::from_suffix(suffix)?))
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.kind, self.channels.suffix())
    }

    pub fn dim(&self) -> usize {
        self.kind.per_channel_dim() * self.channels.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDescriptor {
    pub vector: Vec<f64>,
    pub kind: DescriptorKind,
    pub channel_set: ChannelSet,
    pub spec: PatchSpec,
}

/// Gradient of a tile by central differences with edge clamping.
#[inline]
fn gradient(tile: &Tile, x: usize, y: usize) -> (f64, f64) {
    let (xi, yi) = (x as isize, y as isize);
    let gx = 0.5 * (tile.get_clamped(xi + 1, yi) - tile.get_clamped(xi - 1, yi));
    let gy = 0.5 * (tile.get_clamped(xi, yi + 1) - tile.get_clamped(xi, yi - 1));
    (gx, gy)
}

/// Split a continuous coordinate into its two neighboring bins and weights.
#[inline]
fn spread(pos: f64) -> (isize, f64) {
    let lo = pos.floor();
    (lo as isize, pos - lo)
}

/// Unnormalized 4x4x8 histogram of oriented gradients with trilinear
/// interpolation. Layout: `(cell_y * 4 + cell_x) * 8 + bin`.
pub fn sift_histogram(tile: &Tile) -> Vec<f64> {
    let mut hist = vec![0.0; SIFT_DIM];
    let bin_width = TAU / ORIENTATION_BINS as f64;
    for y in 0..TILE_SIDE {
        let (cy0, fy) = spread((y as f64 + 0.5) / CELL_SIDE as f64 - 0.5);
        for x in 0..TILE_SIDE {
            let (gx, gy) = gradient(tile, x, y);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(TAU);
            let (b0, fo) = spread(theta / bin_width);
            let (cx0, fx) = spread((x as f64 + 0.5) / CELL_SIDE as f64 - 0.5);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let cy = cy0 + dy;
                if wy == 0.0 || !(0..GRID_CELLS as isize).contains(&cy) {
                    continue;
                }
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let cx = cx0 + dx;
                    if wx == 0.0 || !(0..GRID_CELLS as isize).contains(&cx) {
                        continue;
                    }
                    let cell = (cy as usize * GRID_CELLS + cx as usize) * ORIENTATION_BINS;
                    for (db, wo) in [(0, 1.0 - fo), (1, fo)] {
                        if wo == 0.0 {
                            continue;
                        }
                        let bin = (b0 + db).rem_euclid(ORIENTATION_BINS as isize) as usize;
                        hist[cell + bin] += mag * wy * wx * wo;
                    }
                }
            }
        }
    }
    hist
}

fn l2_normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// 128-dimensional SIFT: histogram, L2 normalization, clamp at 0.2,
/// renormalization. A flat tile yields the zero vector.
pub fn sift_descriptor(tile: &Tile) -> Vec<f64> {
    let mut v = sift_histogram(tile);
    if l2_normalize(&mut v) == 0.0 {
        return v;
    }
    v.iter_mut().for_each(|x| *x = x.min(SIFT_CLAMP));
    l2_normalize(&mut v);
    v
}

/// Mean and population standard deviation of each 8x8 cell, cell-major.
pub fn col_descriptor(tile: &Tile) -> Vec<f64> {
    let n = (CELL_SIDE * CELL_SIDE) as f64;
    let mut out = Vec::with_capacity(COL_DIM);
    for cy in 0..GRID_CELLS {
        for cx in 0..GRID_CELLS {
            let cell = || {
                (0..CELL_SIDE).flat_map(move |dy| {
                    (0..CELL_SIDE).map(move |dx| (cx * CELL_SIDE + dx, cy * CELL_SIDE + dy))
                })
            };
            let mean = cell().map(|(x, y)| tile.get(x, y)).sum::<f64>() / n;
            let var = cell().map(|(x, y)| (tile.get(x, y) - mean).powi(2)).sum::<f64>() / n;
            out.push(mean);
            out.push(var.sqrt());
        }
    }
    out
}

/// Computes `kind` on each channel of `channel_set` and concatenates the
/// results in channel order. Channels must already be present on `img`.
pub fn compose_descriptor(
    img: &MultiChannelImage,
    spec: &PatchSpec,
    kind: DescriptorKind,
    channel_set: &ChannelSet,
) -> Result<PatchDescriptor> {
    let mut vector = Vec::with_capacity(kind.per_channel_dim() * channel_set.len());
    for &id in channel_set.ids() {
        let plane = img.channel(id)?;
        vector.extend(kind.describe(&extract_patch(plane, spec)));
    }
    Ok(PatchDescriptor {
        vector,
        kind,
        channel_set: channel_set.clone(),
        spec: *spec,
    })
}
