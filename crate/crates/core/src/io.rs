//! File formats: landmark text files and 8-bit grey images.
//!
//! Landmark files hold the point count on the first line followed by one
//! `x y` pair per line, in pixels. Images are 8-bit grey PNG or PGM; byte
//! `v` maps to `v / 127.5 − 1` on load and back with round-half-up on save.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use crate::aam::{LandmarkSet, Point};
use crate::error::{Error, Result};
use crate::raster::GreyImage;

pub fn byte_to_unit(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

pub fn unit_to_byte(x: f64) -> u8 {
    ((x + 1.0) * 127.5 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn parse_landmarks(text: &str) -> Result<LandmarkSet> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let count: usize = lines
        .next()
        .ok_or_else(|| Error::Format("empty landmark file".into()))?
        .parse()
        .map_err(|e| Error::Format(format!("bad landmark count: {e}")))?;
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let mut it = line.split_whitespace();
        let mut coord = |name: &str| -> Result<f64> {
            it.next()
                .ok_or_else(|| Error::Format(format!("landmark {i}: missing {name}")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("landmark {i}: bad {name}: {e}")))
        };
        let x = coord("x")?;
        let y = coord("y")?;
        points.push(Point::new(x, y));
    }
    if points.len() != count {
        return Err(Error::Format(format!(
            "header announces {count} landmarks, file has {}",
            points.len()
        )));
    }
    LandmarkSet::new(points)
}

pub fn render_landmarks(set: &LandmarkSet) -> String {
    let mut s = format!("{}\n", set.len());
    for p in &set.points {
        s.push_str(&format!("{} {}\n", p.x, p.y));
    }
    s
}

pub fn read_landmarks(path: &Path) -> Result<LandmarkSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text)
}

pub fn write_landmarks(path: &Path, set: &LandmarkSet) -> Result<()> {
    fs::write(path, render_landmarks(set)).map_err(|e| Error::io(path, e))
}

pub fn to_gray8(img: &GreyImage) -> GrayImage {
    let (w, h) = img.frame();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([unit_to_byte(img.get(y as usize, x as usize))])
    })
}

pub fn from_gray8(g: &GrayImage) -> GreyImage {
    let (w, h) = (g.width() as usize, g.height() as usize);
    let data = g.pixels().map(|p| byte_to_unit(p.0[0])).collect();
    GreyImage::new(w, h, data).expect("buffer matches frame")
}

/// Loads a PNG or PGM (any colour type is converted to grey).
pub fn load_image(path: &Path) -> Result<GreyImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let dynimg = image::load_from_memory(&bytes)?;
    Ok(from_gray8(&dynimg.to_luma8()))
}

/// Saves as PGM when the extension is `pgm`, PNG otherwise.
pub fn save_image(path: &Path, img: &GreyImage) -> Result<()> {
    save_gray8(path, &to_gray8(img))
}

pub fn save_gray8(path: &Path, g: &GrayImage) -> Result<()> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    g.save_with_format(path, format).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}
