//! Minimal raster line plot of a trimap curve.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{CliError, CliResult};
use crate::report::TrimapPoint;

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: u32 = 40;

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    // Bresenham
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Accuracy (0..1, vertical) against band radius (horizontal), with light
/// grid lines at every 0.1.
pub fn render_trimap_plot(points: &[TrimapPoint], path: &Path) -> CliResult<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (left, right) = (MARGIN as i64, (WIDTH - MARGIN / 2) as i64);
    let (top, bottom) = ((MARGIN / 2) as i64, (HEIGHT - MARGIN) as i64);
    for i in 0..=10 {
        let y = bottom - (bottom - top) * i / 10;
        line(&mut img, (left, y), (right, y), Rgb([225, 225, 225]));
    }
    line(&mut img, (left, top), (left, bottom), Rgb([0, 0, 0]));
    line(&mut img, (left, bottom), (right, bottom), Rgb([0, 0, 0]));

    let r_max = points.iter().map(|p| p.r).max().unwrap_or(1).max(1) as f64;
    let to_px = |p: &TrimapPoint| {
        let x = left + ((right - left) as f64 * p.r as f64 / r_max).round() as i64;
        let y = bottom - ((bottom - top) as f64 * p.accuracy.clamp(0.0, 1.0)).round() as i64;
        (x, y)
    };
    let pts: Vec<(i64, i64)> = points.iter().map(to_px).collect();
    for pair in pts.windows(2) {
        line(&mut img, pair[0], pair[1], Rgb([20, 60, 200]));
    }
    for &(x, y) in &pts {
        for d in -2..=2 {
            line(&mut img, (x - 2, y + d), (x + 2, y + d), Rgb([200, 30, 30]));
        }
    }
    img.save(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
