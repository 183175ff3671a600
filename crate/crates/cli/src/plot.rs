//! Heatmap rendering for co-occurrence matrices.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::ArrayView2;

use crate::error::{CliError, CliResult};

const CELL: u32 = 24;
const GRID: Rgb<u8> = Rgb([200, 200, 200]);

/// White at zero, deep blue at `scale`.
fn shade(value: f64, scale: f64) -> Rgb<u8> {
    let t = if scale > 0.0 { (value / scale).clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |from: f64, to: f64| (from + (to - from) * t).round() as u8;
    Rgb([lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0)])
}

pub fn heatmap(m: ArrayView2<'_, f64>, scale: f64) -> RgbImage {
    let (rows, cols) = m.dim();
    let mut img = RgbImage::from_pixel(cols as u32 * CELL + 1, rows as u32 * CELL + 1, GRID);
    for ((i, j), &v) in m.indexed_iter() {
        let colour = shade(v, scale);
        for dy in 1..CELL {
            for dx in 1..CELL {
                img.put_pixel(j as u32 * CELL + dx, i as u32 * CELL + dy, colour);
            }
        }
    }
    img
}

pub fn save_heatmap(m: ArrayView2<'_, f64>, scale: f64, path: &Path) -> CliResult<()> {
    heatmap(m, scale)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| CliError::Plot { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cells_are_shaded_by_value() {
        let img = heatmap(array![[0.0, 1.0], [0.5, 2.0]].view(), 1.0);
        assert_eq!(img.dimensions(), (2 * CELL + 1, 2 * CELL + 1));
        assert_eq!(*img.get_pixel(0, 0), GRID);
        assert_eq!(*img.get_pixel(5, 5), Rgb([255, 255, 255]));
        let full = *img.get_pixel(CELL + 5, 5);
        assert_eq!(full, Rgb([8, 48, 107]));
        // values above the scale saturate
        assert_eq!(*img.get_pixel(CELL + 5, CELL + 5), full);
    }
}
