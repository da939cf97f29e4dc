//! Parametric cartoon faces with landmarks, used when no landmarked photo
//! corpus is supplied.
//!
//! A face is an elliptical head with two elliptical eyes, a nose ridge and an
//! elliptical mouth, each drawn as a soft-edged intensity blob. Landmarks are
//! placed on feature boundaries in a fixed order:
//!
//! | range            | feature                                   |
//! |------------------|-------------------------------------------|
//! | `0..L-14`        | head outline, clockwise from the top       |
//! | next 4           | left eye: left, top, right, bottom         |
//! | next 4           | right eye: left, top, right, bottom        |
//! | next 2           | nose: bridge, tip                          |
//! | last 4           | mouth: left, top, right, bottom            |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::geometry::{LandmarkSet, Point};
use crate::error::{Error, Result};
use crate::raster::GreyImage;

/// Landmarks used by the inner features; the rest outline the head.
pub const FEATURE_LANDMARKS: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralConfig {
    pub n: usize,
    pub landmarks: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Multiplies every geometric and photometric jitter amplitude.
    pub jitter: f64,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            n: 200,
            landmarks: 30,
            width: 32,
            height: 32,
            seed: 0,
            jitter: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub images: Vec<GreyImage>,
    pub landmarks: Vec<LandmarkSet>,
}

/// Face parameters in units of the frame (0..1 on each axis).
#[derive(Debug, Clone, Copy)]
struct Face {
    head: (f64, f64, f64, f64),
    eye_dx: f64,
    eye_y: f64,
    eye_r: (f64, f64),
    nose_len: f64,
    nose_shift: f64,
    mouth_y: f64,
    mouth_r: (f64, f64),
    background: f64,
    skin: f64,
    shade: f64,
    eye_level: f64,
    mouth_level: f64,
    nose_level: f64,
}

impl Face {
    fn sample(rng: &mut ChaCha8Rng, j: f64) -> Self {
        let mut g = |sd: f64| -> f64 {
            let u: f64 = rng.sample(StandardNormal);
            j * sd * u.clamp(-2.5, 2.5)
        };
        Face {
            head: (
                0.5 + g(0.02),
                0.5 + g(0.02),
                0.33 + g(0.025),
                0.41 + g(0.025),
            ),
            eye_dx: 0.14 + g(0.015),
            eye_y: -0.1 + g(0.02),
            eye_r: (0.07 + g(0.01), 0.045 + g(0.01)),
            nose_len: 0.13 + g(0.02),
            nose_shift: g(0.02),
            mouth_y: 0.2 + g(0.02),
            mouth_r: (0.11 + g(0.02), 0.04 + g(0.012)),
            background: -0.8 + g(0.05),
            skin: 0.3 + g(0.15),
            shade: g(0.2),
            eye_level: -0.6 + g(0.15),
            mouth_level: -0.3 + g(0.2),
            nose_level: -0.15 + g(0.1),
        }
    }

    fn landmarks(&self, outline: usize, w: f64, h: f64) -> Vec<Point> {
        let (cx, cy, rx, ry) = self.head;
        let px = |u: f64, v: f64| Point::new(u * (w - 1.0), v * (h - 1.0));
        let mut pts = Vec::with_capacity(outline + FEATURE_LANDMARKS);
        for i in 0..outline {
            let t = std::f64::consts::TAU * i as f64 / outline as f64;
            pts.push(px(cx + rx * t.sin(), cy - ry * t.cos()));
        }
        for side in [-1.0, 1.0] {
            let ex = cx + side * self.eye_dx;
            let ey = cy + self.eye_y;
            let (erx, ery) = self.eye_r;
            pts.extend([
                px(ex - erx, ey),
                px(ex, ey - ery),
                px(ex + erx, ey),
                px(ex, ey + ery),
            ]);
        }
        let nose_top = cy + self.eye_y;
        pts.push(px(cx, nose_top));
        pts.push(px(cx + self.nose_shift, nose_top + self.nose_len));
        let my = cy + self.mouth_y;
        let (mrx, mry) = self.mouth_r;
        pts.extend([
            px(cx - mrx, my),
            px(cx, my - mry),
            px(cx + mrx, my),
            px(cx, my + mry),
        ]);
        pts
    }

    fn render(&self, w: usize, h: usize) -> GreyImage {
        let (cx, cy, rx, ry) = self.head;
        let mut img = GreyImage::filled(w, h, self.background);
        let sx = 1.0 / (w - 1) as f64;
        let sy = 1.0 / (h - 1) as f64;
        // Edge softness of a fraction of a pixel.
        let soft = 0.4 / (w.min(h) as f64);
        for row in 0..h {
            for col in 0..w {
                let (u, v) = (col as f64 * sx, row as f64 * sy);
                let mut val = self.background;
                let head = blob(u, v, cx, cy, rx, ry, soft);
                let skin = self.skin + self.shade * (u - cx) / rx;
                val += head * (skin - val);
                for side in [-1.0, 1.0] {
                    let e = blob(
                        u,
                        v,
                        cx + side * self.eye_dx,
                        cy + self.eye_y,
                        self.eye_r.0,
                        self.eye_r.1,
                        soft,
                    );
                    val += e * (self.eye_level - val);
                }
                let nose = segment_blob(
                    u,
                    v,
                    (cx, cy + self.eye_y),
                    (cx + self.nose_shift, cy + self.eye_y + self.nose_len),
                    0.025,
                    soft,
                );
                val += nose * (self.skin + self.nose_level - val);
                let m = blob(
                    u,
                    v,
                    cx,
                    cy + self.mouth_y,
                    self.mouth_r.0,
                    self.mouth_r.1,
                    soft,
                );
                val += m * (self.mouth_level - val);
                img.set(row, col, val.clamp(-1.0, 1.0));
            }
        }
        img
    }
}

fn smoothstep_edge(signed: f64, soft: f64) -> f64 {
    1.0 / (1.0 + (-signed / soft).exp())
}

/// Soft membership of `(u, v)` in an axis-aligned ellipse.
fn blob(u: f64, v: f64, cx: f64, cy: f64, rx: f64, ry: f64, soft: f64) -> f64 {
    let r = (((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2)).sqrt();
    // Approximate signed distance to the boundary in frame units.
    smoothstep_edge((1.0 - r) * rx.min(ry), soft)
}

fn segment_blob(u: f64, v: f64, a: (f64, f64), b: (f64, f64), radius: f64, soft: f64) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((u - a.0) * dx + (v - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    let d = ((u - qx).powi(2) + (v - qy).powi(2)).sqrt();
    smoothstep_edge(radius - d, soft)
}

/// Generates `n` landmarked cartoon faces, deterministically from the seed.
pub fn procedural_corpus(config: &ProceduralConfig) -> Result<Corpus> {
    let ProceduralConfig {
        n,
        landmarks,
        width,
        height,
        seed,
        jitter,
    } = *config;
    if n < 20 {
        return Err(Error::param(format!(
            "procedural corpus needs n >= 20, got {n}"
        )));
    }
    if landmarks < FEATURE_LANDMARKS + 3 {
        return Err(Error::param(format!(
            "need at least {} landmarks, got {landmarks}",
            FEATURE_LANDMARKS + 3
        )));
    }
    let outline = landmarks - FEATURE_LANDMARKS;
    let min_side = width.min(height);
    // Head outline points must be at least a pixel apart.
    let perimeter = std::f64::consts::TAU * 0.3 * min_side as f64;
    if min_side < 16 || perimeter / (outline as f64) < 1.0 {
        return Err(Error::param(format!(
            "a {width}x{height} frame is too small for {landmarks} landmarks"
        )));
    }
    if jitter.is_nan() || jitter < 0.0 {
        return Err(Error::param("jitter must be non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let face = Face::sample(&mut rng, jitter);
        let mut lm = LandmarkSet::new(face.landmarks(outline, width as f64, height as f64))?;
        lm.clamp_to_frame(width, height);
        images.push(face.render(width, height));
        sets.push(lm);
    }
    Ok(Corpus {
        images,
        landmarks: sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = ProceduralConfig {
            n: 20,
            seed: 11,
            ..Default::default()
        };
        let a = procedural_corpus(&cfg).unwrap();
        let b = procedural_corpus(&cfg).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.landmarks, b.landmarks);
        let c = procedural_corpus(&ProceduralConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn zero_jitter_gives_identical_faces() {
        let cfg = ProceduralConfig {
            n: 20,
            jitter: 0.0,
            ..Default::default()
        };
        let c = procedural_corpus(&cfg).unwrap();
        assert!(c.images.iter().all(|i| *i == c.images[0]));
        assert!(c.landmarks.iter().all(|l| *l == c.landmarks[0]));
    }

    #[test]
    fn landmark_variance_positive_everywhere() {
        let c = procedural_corpus(&ProceduralConfig::default()).unwrap();
        let rows: Vec<Vec<f64>> = c.landmarks.iter().map(|l| l.flatten()).collect();
        let m = crate::numerics::DenseMatrix::from_rows(&rows).unwrap();
        assert!(m.column_sds().iter().all(|&s| s > 0.0));
        assert!(c
            .landmarks
            .iter()
            .all(|l| l.len() == 30 && l.inside_frame(32, 32)));
        assert!(c
            .images
            .iter()
            .all(|i| i.pixels().iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn rejects_small_frames_and_corpora() {
        let small = ProceduralConfig {
            width: 12,
            height: 12,
            ..Default::default()
        };
        assert!(matches!(
            procedural_corpus(&small),
            Err(Error::Parameter(_))
        ));
        let crowded = ProceduralConfig {
            width: 16,
            height: 16,
            landmarks: 60,
            ..Default::default()
        };
        assert!(procedural_corpus(&crowded).is_err());
        let few = ProceduralConfig {
            n: 5,
            ..Default::default()
        };
        assert!(procedural_corpus(&few).is_err());
    }
}
