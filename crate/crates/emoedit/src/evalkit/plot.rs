//! Minimal PNG figure output: a confusion-matrix heatmap and per-emotion
//! F0 curves. No text rendering; cells and curves are positioned on a
//! fixed grid so figures stay legible without a font dependency.

use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};
use image::{Rgb, RgbImage};
use ndarray::Array2;
use std::path::Path;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const GRID: Rgb<u8> = Rgb([180, 180, 180]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);

/// One line color per emotion, in label id order.
pub const EMOTION_COLORS: [[u8; 3]; 5] = [
    [90, 90, 90],    // neutral
    [230, 160, 0],   // happy
    [60, 100, 200],  // sad
    [200, 50, 50],   // angry
    [130, 60, 180],  // surprise
];

fn save(img: RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    img.save(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Heatmap of a row-normalized matrix: dark cells for high values, one
/// block per entry, grid lines between. The top-left cell is (0,0).
pub fn save_heatmap(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    let (rows, cols) = matrix.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("cannot plot an empty matrix".into()));
    }
    let cell = 56u32;
    let margin = 12u32;
    let w = margin * 2 + cols as u32 * cell;
    let h = margin * 2 + rows as u32 * cell;
    let mut img = RgbImage::from_pixel(w, h, BG);
    for i in 0..rows {
        for j in 0..cols {
            let v = matrix[[i, j]].clamp(0.0, 1.0);
            // white at 0 toward a saturated blue at 1
            let r = (255.0 - 205.0 * v) as u8;
            let g = (255.0 - 165.0 * v) as u8;
            let b = (255.0 - 55.0 * v) as u8;
            let color = Rgb([r, g, b]);
            let x0 = margin + j as u32 * cell;
            let y0 = margin + i as u32 * cell;
            for dy in 0..cell {
                for dx in 0..cell {
                    let edge = dx == 0 || dy == 0 || dx == cell - 1 || dy == cell - 1;
                    img.put_pixel(x0 + dx, y0 + dy, if edge { GRID } else { color });
                }
            }
        }
    }
    save(img, path)
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        if (0..w).contains(&x) && (0..h).contains(&y) {
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

/// F0 curves over frame index, one polyline per emotion, gaps at
/// unvoiced frames. The y axis spans the voiced range with 10% headroom.
pub fn save_f0_curves(
    curves: &[(EmotionLabel, Vec<Option<f64>>)],
    path: &Path,
) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::InvalidInput("no F0 curves to plot".into()));
    }
    let max_len = curves.iter().map(|(_, c)| c.len()).max().unwrap();
    if max_len < 2 {
        return Err(Error::InvalidInput("curves too short to plot".into()));
    }
    let voiced: Vec<f64> = curves
        .iter()
        .flat_map(|(_, c)| c.iter().flatten().copied())
        .collect();
    if voiced.is_empty() {
        return Err(Error::InvalidInput("no voiced frames in any curve".into()));
    }
    let lo = voiced.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = voiced.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(1.0);
    let (y_lo, y_hi) = (lo - pad, hi + pad);

    let (w, h) = (800u32, 400u32);
    let margin = 30i64;
    let mut img = RgbImage::from_pixel(w, h, BG);
    let plot_w = w as i64 - 2 * margin;
    let plot_h = h as i64 - 2 * margin;
    // axes
    draw_line(&mut img, margin, margin, margin, h as i64 - margin, AXIS);
    draw_line(
        &mut img,
        margin,
        h as i64 - margin,
        w as i64 - margin,
        h as i64 - margin,
        AXIS,
    );
    let to_xy = |frame: usize, hz: f64| -> (i64, i64) {
        let x = margin + (frame as f64 / (max_len - 1) as f64 * plot_w as f64) as i64;
        let y = margin + ((y_hi - hz) / (y_hi - y_lo) * plot_h as f64) as i64;
        (x, y)
    };
    for (emotion, curve) in curves {
        let color = Rgb(EMOTION_COLORS[emotion.id() as usize]);
        let mut prev: Option<(i64, i64)> = None;
        for (frame, hz) in curve.iter().enumerate() {
            match hz {
                Some(hz) => {
                    let (x, y) = to_xy(frame, *hz);
                    if let Some((px, py)) = prev {
                        draw_line(&mut img, px, py, x, y, color);
                    } else {
                        draw_line(&mut img, x, y, x, y, color);
                    }
                    prev = Some((x, y));
                }
                None => prev = None,
            }
        }
    }
    save(img, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_writes_a_decodable_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cm.png");
        let m = Array2::from_shape_fn((5, 5), |(i, j)| if i == j { 1.0 } else { 0.1 });
        save_heatmap(&m, &path).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!(img.width(), 12 * 2 + 5 * 56);
        assert_eq!(img.height(), 12 * 2 + 5 * 56);
        assert!(save_heatmap(&Array2::zeros((0, 0)), &path).is_err());
    }

    #[test]
    fn f0_plot_handles_gaps_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f0.png");
        let curves = vec![
            (
                EmotionLabel::Neutral,
                vec![Some(140.0), Some(150.0), None, Some(145.0), Some(140.0)],
            ),
            (
                EmotionLabel::Surprise,
                vec![Some(230.0), Some(250.0), Some(260.0), None, None],
            ),
        ];
        save_f0_curves(&curves, &path).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!((img.width(), img.height()), (800, 400));

        assert!(save_f0_curves(&[], &path).is_err());
        let unvoiced = vec![(EmotionLabel::Sad, vec![None, None, None])];
        assert!(save_f0_curves(&unvoiced, &path).is_err());
    }
}
