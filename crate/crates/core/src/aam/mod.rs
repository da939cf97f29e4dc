//! The teacher: an active appearance model.
//!
//! A shape model `x = x̄ + P_s b_s` over landmark coordinates and an
//! appearance model `g = ḡ + P_a b_a` over shape-normalized grey levels,
//! composed by a piecewise-affine warp `Y = h(g, x)`.

pub mod geometry;
pub mod procedural;
pub mod warp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use geometry::{build_triangulation, LandmarkSet, Point, Triangulation};
pub use procedural::{procedural_corpus, Corpus, ProceduralConfig};
pub use warp::{warp_image, WarpOutput, BACKGROUND};

use crate::error::{Error, Result};
use crate::numerics::{fit_pca, gaussian_vector, DenseMatrix, PcaModel};
use crate::raster::GreyImage;

pub const AAM_SCHEMA: &str = "lmface.aam/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub mean_shape: LandmarkSet,
    /// PCA over flattened `[x0, y0, x1, y1, ...]` landmark vectors.
    pub basis: PcaModel,
}

impl ShapeModel {
    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn landmarks(&self, b_s: &[f64]) -> Result<LandmarkSet> {
        LandmarkSet::from_flat(&self.basis.reconstruct(b_s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceModel {
    pub frame: (usize, usize),
    /// Row-major per-pixel membership in the mean-shape hull.
    pub mask: Vec<bool>,
    /// PCA over the masked pixels of shape-normalized images.
    pub basis: PcaModel,
}

impl AppearanceModel {
    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn mean_texture(&self) -> &[f64] {
        &self.basis.mean
    }

    /// Lays a masked texture vector on the frame; off-mask pixels are
    /// background.
    pub fn texture_image(&self, texture: &[f64]) -> Result<GreyImage> {
        let (w, h) = self.frame;
        let mut img = GreyImage::filled(w, h, BACKGROUND);
        let mut it = texture.iter();
        for (px, &m) in img.pixels_mut().iter_mut().zip(&self.mask) {
            if m {
                *px = *it
                    .next()
                    .ok_or_else(|| Error::param("texture shorter than mask"))?;
            }
        }
        if it.next().is_some() {
            return Err(Error::param("texture longer than mask"));
        }
        Ok(img)
    }

    pub fn masked_pixels(&self, img: &GreyImage) -> Vec<f64> {
        img.pixels()
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect()
    }
}

/// Concatenated teacher code `Z_AAM = [b_s, b_a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AamCode {
    pub b_s: Vec<f64>,
    pub b_a: Vec<f64>,
}

impl AamCode {
    pub fn zeros(k_s: usize, k_a: usize) -> Self {
        Self {
            b_s: vec![0.0; k_s],
            b_a: vec![0.0; k_a],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.b_s.clone();
        v.extend_from_slice(&self.b_a);
        v
    }

    pub fn from_slice(z: &[f64], k_s: usize) -> Result<Self> {
        if z.len() < k_s {
            return Err(Error::param("code shorter than the shape part"));
        }
        Ok(Self {
            b_s: z[..k_s].to_vec(),
            b_a: z[k_s..].to_vec(),
        })
    }
}

/// The fitted teacher: shape model, appearance model and the mean-shape
/// triangulation (with frame-corner anchors) used by every warp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AamModel {
    pub schema: String,
    pub frame: (usize, usize),
    pub shape: ShapeModel,
    pub appearance: AppearanceModel,
    pub triangulation: Triangulation,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub image: GreyImage,
    /// Generated landmarks left the frame and were clamped back.
    pub landmarks_clamped: bool,
    pub degenerate_triangles: Vec<usize>,
}

/// Averages the landmark sets and fits a `k_s`-component PCA to them.
pub fn fit_shape_model(landmarks: &[LandmarkSet], k_s: usize) -> Result<ShapeModel> {
    let l = landmarks
        .first()
        .ok_or_else(|| Error::data("empty landmark corpus"))?
        .len();
    if let Some((i, bad)) = landmarks.iter().enumerate().find(|(_, s)| s.len() != l) {
        return Err(Error::data(format!(
            "landmark set {i} has {} points, expected {l}",
            bad.len()
        )));
    }
    if landmarks.len() <= k_s {
        return Err(Error::param(format!(
            "{} shapes cannot support {k_s} components",
            landmarks.len()
        )));
    }
    let rows: Vec<Vec<f64>> = landmarks.iter().map(LandmarkSet::flatten).collect();
    let basis = fit_pca(&DenseMatrix::from_rows(&rows)?, k_s)?;
    let mean_shape = LandmarkSet::from_flat(&basis.mean)?;
    Ok(ShapeModel { mean_shape, basis })
}

/// Pixels whose centres lie inside the convex hull of `shape`.
pub fn hull_mask(shape: &LandmarkSet, width: usize, height: usize) -> Vec<bool> {
    let hull = geometry::convex_hull(&shape.points);
    (0..width * height)
        .map(|i| geometry::inside_convex(&hull, Point::new((i % width) as f64, (i / width) as f64)))
        .collect()
}

/// Warps every image onto the mean shape and fits a `k_a`-component PCA to
/// the masked shape-free textures.
pub fn fit_appearance_model(
    images: &[GreyImage],
    landmarks: &[LandmarkSet],
    shape: &ShapeModel,
    k_a: usize,
) -> Result<(AppearanceModel, Triangulation)> {
    if images.len() != landmarks.len() {
        return Err(Error::data(format!(
            "{} images but {} landmark sets",
            images.len(),
            landmarks.len()
        )));
    }
    if images.len() <= k_a {
        return Err(Error::param(format!(
            "{} images cannot support {k_a} components",
            images.len()
        )));
    }
    let (w, h) = images[0].frame();
    if let Some(i) = images.iter().position(|im| im.frame() != (w, h)) {
        return Err(Error::data(format!("image {i} has a different frame")));
    }
    if !shape.mean_shape.inside_frame(w, h) {
        return Err(Error::data("mean shape lies outside the image frame"));
    }
    let tri = Triangulation::with_frame_anchors(&shape.mean_shape, w, h)?;
    let mask = hull_mask(&shape.mean_shape, w, h);
    let mut rows = Vec::with_capacity(images.len());
    for (i, (img, lm)) in images.iter().zip(landmarks).enumerate() {
        let out = warp_image(img, lm, &shape.mean_shape, &tri)?;
        if !out.degenerate_triangles.is_empty() {
            return Err(Error::Geometry(format!(
                "mean-shape triangulation is degenerate while normalizing image {i}"
            )));
        }
        rows.push(
            out.image
                .pixels()
                .iter()
                .zip(&mask)
                .filter(|(_, m)| **m)
                .map(|(v, _)| *v)
                .collect::<Vec<f64>>(),
        );
    }
    let basis = fit_pca(&DenseMatrix::from_rows(&rows)?, k_a)?;
    Ok((
        AppearanceModel {
            frame: (w, h),
            mask,
            basis,
        },
        tri,
    ))
}

impl AamModel {
    /// Fits shape then appearance models on a landmarked corpus.
    pub fn fit(
        images: &[GreyImage],
        landmarks: &[LandmarkSet],
        k_s: usize,
        k_a: usize,
    ) -> Result<Self> {
        let shape = fit_shape_model(landmarks, k_s)?;
        let (appearance, triangulation) = fit_appearance_model(images, landmarks, &shape, k_a)?;
        Ok(Self {
            schema: AAM_SCHEMA.to_string(),
            frame: appearance.frame,
            shape,
            appearance,
            triangulation,
        })
    }

    pub fn k_s(&self) -> usize {
        self.shape.k()
    }

    pub fn k_a(&self) -> usize {
        self.appearance.k()
    }

    pub fn code_dim(&self) -> usize {
        self.k_s() + self.k_a()
    }

    /// Per-dimension training standard deviations of `[b_s, b_a]`.
    pub fn code_sds(&self) -> Vec<f64> {
        let mut v = self.shape.basis.component_sds.clone();
        v.extend_from_slice(&self.appearance.basis.component_sds);
        v
    }

    /// Renders a face: reconstruct landmarks and texture, then warp the
    /// texture from the mean shape onto the landmarks. Intensities are
    /// clamped to `[-1, 1]`.
    pub fn synthesize(&self, code: &AamCode) -> Result<Synthesis> {
        let mut s = self.synthesize_unclamped(code)?;
        s.image.clamp_unit();
        Ok(s)
    }

    /// As [`AamModel::synthesize`] without the final intensity clamp.
    pub fn synthesize_unclamped(&self, code: &AamCode) -> Result<Synthesis> {
        if code.b_s.len() != self.k_s() || code.b_a.len() != self.k_a() {
            return Err(Error::param(format!(
                "code has {}+{} dimensions, model expects {}+{}",
                code.b_s.len(),
                code.b_a.len(),
                self.k_s(),
                self.k_a()
            )));
        }
        let (w, h) = self.frame;
        let mut x = self.shape.landmarks(&code.b_s)?;
        let landmarks_clamped = x.clamp_to_frame(w, h);
        let g = self.appearance.basis.reconstruct(&code.b_a)?;
        let texture = self.appearance.texture_image(&g)?;
        let out = warp_image(&texture, &self.shape.mean_shape, &x, &self.triangulation)?;
        Ok(Synthesis {
            image: out.image,
            landmarks_clamped,
            degenerate_triangles: out.degenerate_triangles,
        })
    }

    /// Draws codes with each dimension `N(0, sd²)` at its training sd.
    pub fn sample_codes<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<AamCode>> {
        if n == 0 {
            return Err(Error::param("must sample at least one code"));
        }
        let s_sd = &self.shape.basis.component_sds;
        let a_sd = &self.appearance.basis.component_sds;
        (0..n)
            .map(|_| {
                Ok(AamCode {
                    b_s: gaussian_vector(s_sd, rng)?,
                    b_a: gaussian_vector(a_sd, rng)?,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: AamModel = serde_json::from_str(s)?;
        if m.schema != AAM_SCHEMA {
            return Err(Error::Format(format!(
                "unsupported AAM schema '{}', expected '{AAM_SCHEMA}'",
                m.schema
            )));
        }
        Ok(m)
    }
}

/// Free-function form of [`AamModel::synthesize`].
pub fn synthesize(model: &AamModel, code: &AamCode) -> Result<Synthesis> {
    model.synthesize(code)
}

/// Free-function form of [`AamModel::sample_codes`].
pub fn sample_codes<R: Rng + ?Sized>(
    model: &AamModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<AamCode>> {
    model.sample_codes(n, rng)
}
