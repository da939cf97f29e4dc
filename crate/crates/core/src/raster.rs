//! Single-channel images on the `[-1, 1]` intensity scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grey-level image. Pixel `(row, col)` has its centre at
/// `(x, y) = (col, row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreyImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GreyImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image frame must be non-empty"));
        }
        if data.len() != width * height {
            return Err(Error::param(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    /// Bilinear sample at continuous coordinates, clamped to the frame edge.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (c0, r0) = (x0 as usize, y0 as usize);
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let top = self.get(r0, c0) * (1.0 - fx) + self.get(r0, c1) * fx;
        let bottom = self.get(r1, c0) * (1.0 - fx) + self.get(r1, c1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    }

    pub fn max_abs_diff(&self, other: &GreyImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
