//! Backward piecewise-affine warping over a fixed triangle topology.

use super::geometry::{orient, LandmarkSet, Point, Triangulation};
use crate::error::{Error, Result};
use crate::raster::GreyImage;

/// Value given to destination pixels no triangle covers.
pub const BACKGROUND: f64 = -1.0;

#[derive(Debug, Clone)]
pub struct WarpOutput {
    pub image: GreyImage,
    /// Triangles skipped because their destination area vanished.
    pub degenerate_triangles: Vec<usize>,
}

/// Warps `image` so that the landmarks `src` land on `dst`.
///
/// Each destination pixel centre is located in a destination triangle,
/// mapped barycentrically into the matching source triangle and sampled
/// bilinearly. Pixels covered by no triangle get [`BACKGROUND`]. Where
/// triangles overlap (a folded destination mesh) the lower-indexed
/// triangle wins.
pub fn warp_image(
    image: &GreyImage,
    src: &LandmarkSet,
    dst: &LandmarkSet,
    tri: &Triangulation,
) -> Result<WarpOutput> {
    if src.len() != dst.len() {
        return Err(Error::param(format!(
            "source has {} landmarks, destination has {}",
            src.len(),
            dst.len()
        )));
    }
    let s = tri.full_vertices(src)?;
    let d = tri.full_vertices(dst)?;
    warp_vertices(image, &s, &d, &tri.triangles)
}

pub(crate) fn warp_vertices(
    image: &GreyImage,
    src: &[Point],
    dst: &[Point],
    triangles: &[[usize; 3]],
) -> Result<WarpOutput> {
    let (w, h) = image.frame();
    let mut out = GreyImage::filled(w, h, BACKGROUND);
    let mut filled = vec![false; w * h];
    let mut degenerate = Vec::new();

    for (ti, t) in triangles.iter().enumerate() {
        if t.iter().any(|&v| v >= dst.len() || v >= src.len()) {
            return Err(Error::param(format!(
                "triangle {ti} indexes a missing vertex"
            )));
        }
        let (a, b, c) = (dst[t[0]], dst[t[1]], dst[t[2]]);
        let det = orient(a, b, c);
        if det.abs() < 1e-10 {
            degenerate.push(ti);
            continue;
        }
        let (sa, sb, sc) = (src[t[0]], src[t[1]], src[t[2]]);
        let tol = 1e-9;
        let x0 = a.x.min(b.x).min(c.x).ceil().max(0.0) as usize;
        let y0 = a.y.min(b.y).min(c.y).ceil().max(0.0) as usize;
        let x1 = a.x.max(b.x).max(c.x).floor().min((w - 1) as f64);
        let y1 = a.y.max(b.y).max(c.y).floor().min((h - 1) as f64);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        for row in y0..=y1 {
            for col in x0..=x1 {
                let idx = row * w + col;
                if filled[idx] {
                    continue;
                }
                let p = Point::new(col as f64, row as f64);
                let l0 = orient(b, c, p) / det;
                let l1 = orient(c, a, p) / det;
                let l2 = 1.0 - l0 - l1;
                if l0 < -tol || l1 < -tol || l2 < -tol {
                    continue;
                }
                let sx = l0 * sa.x + l1 * sb.x + l2 * sc.x;
                let sy = l0 * sa.y + l1 * sb.y + l2 * sc.y;
                out.pixels_mut()[idx] = image.bilinear(sx, sy);
                filled[idx] = true;
            }
        }
    }
    Ok(WarpOutput {
        image: out,
        degenerate_triangles: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aam::geometry::build_triangulation;

    fn ramp(w: usize, h: usize) -> GreyImage {
        let data = (0..w * h)
            .map(|i| ((i % w) as f64 * 0.05 - (i / w) as f64 * 0.03).sin())
            .collect();
        GreyImage::new(w, h, data).unwrap()
    }

    fn landmarks() -> LandmarkSet {
        LandmarkSet::new(vec![
            Point::new(8.0, 8.0),
            Point::new(22.0, 9.0),
            Point::new(15.0, 20.0),
            Point::new(10.5, 24.0),
            Point::new(21.0, 23.5),
        ])
        .unwrap()
    }

    #[test]
    fn identity_warp() {
        let img = ramp(32, 32);
        let l = landmarks();
        let tri = Triangulation::with_frame_anchors(&l, 32, 32).unwrap();
        let out = warp_image(&img, &l, &l, &tri).unwrap();
        assert!(out.degenerate_triangles.is_empty());
        assert!(out.image.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn uncovered_pixels_are_background() {
        let img = ramp(16, 16);
        let l = LandmarkSet::new(vec![
            Point::new(3.0, 3.0),
            Point::new(12.0, 3.0),
            Point::new(7.0, 12.0),
        ])
        .unwrap();
        let tri = build_triangulation(&l.points).unwrap();
        let out = warp_image(&img, &l, &l, &tri).unwrap();
        assert_eq!(out.image.get(0, 0), BACKGROUND);
        assert_eq!(out.image.get(15, 15), BACKGROUND);
        assert!((out.image.get(5, 7) - img.get(5, 7)).abs() < 1e-12);
    }

    #[test]
    fn collapsed_destination_triangle_is_flagged() {
        let img = ramp(16, 16);
        let src = LandmarkSet::new(vec![
            Point::new(3.0, 3.0),
            Point::new(12.0, 3.0),
            Point::new(7.0, 12.0),
        ])
        .unwrap();
        let dst = LandmarkSet::new(vec![
            Point::new(3.0, 3.0),
            Point::new(12.0, 3.0),
            Point::new(7.5, 3.0),
        ])
        .unwrap();
        let tri = build_triangulation(&src.points).unwrap();
        let out = warp_image(&img, &src, &dst, &tri).unwrap();
        assert_eq!(out.degenerate_triangles, vec![0]);
    }

    #[test]
    fn mismatched_landmark_counts() {
        let img = ramp(16, 16);
        let l = landmarks();
        let tri = Triangulation::with_frame_anchors(&l, 16, 16).unwrap();
        let short = LandmarkSet::new(l.points[..4].to_vec()).unwrap();
        assert!(warp_image(&img, &l, &short, &tri).is_err());
    }
}
