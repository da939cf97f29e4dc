//! Image montages with white separators.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::io::{save_gray8, unit_to_byte};
use crate::raster::GreyImage;

/// Separator and border width in pixels.
pub const SEPARATOR: usize = 2;

/// Tiles `images` row-major into `cols` columns, with a white
/// [`SEPARATOR`]-pixel gap between tiles and around the edge. Unused cells
/// of the last row stay white.
pub fn montage(images: &[GreyImage], cols: usize) -> Result<GrayImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::param("montage needs at least one image"))?;
    if cols == 0 {
        return Err(Error::param("montage needs at least one column"));
    }
    let (w, h) = first.frame();
    if let Some(i) = images.iter().position(|im| im.frame() != (w, h)) {
        return Err(Error::param(format!("image {i} has a different frame")));
    }
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let (tw, th) = (
        cols * w + (cols + 1) * SEPARATOR,
        rows * h + (rows + 1) * SEPARATOR,
    );
    let mut out = GrayImage::from_pixel(tw as u32, th as u32, Luma([255]));
    for (k, img) in images.iter().enumerate() {
        let (x0, y0) = tile_origin(k, cols, w, h);
        for row in 0..h {
            for col in 0..w {
                out.put_pixel(
                    (x0 + col) as u32,
                    (y0 + row) as u32,
                    Luma([unit_to_byte(img.get(row, col))]),
                );
            }
        }
    }
    Ok(out)
}

/// Top-left pixel of tile `k`.
pub fn tile_origin(k: usize, cols: usize, w: usize, h: usize) -> (usize, usize) {
    let (r, c) = (k / cols, k % cols);
    (
        SEPARATOR + c * (w + SEPARATOR),
        SEPARATOR + r * (h + SEPARATOR),
    )
}

/// Writes a [`montage`] as PNG.
pub fn render_grid(images: &[GreyImage], cols: usize, path: &Path) -> Result<()> {
    save_gray8(path, &montage(images, cols)?)
}
