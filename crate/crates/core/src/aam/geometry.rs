//! Landmark geometry and Delaunay triangulation (Bowyer–Watson).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// An ordered set of landmarks in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkSet {
    pub points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::data(format!(
                "a landmark set needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::data("landmark coordinates must be finite"));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `[x0, y0, x1, y1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::param("flattened landmarks must have even length"));
        }
        Self::new(v.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect())
    }

    pub fn inside_frame(&self, width: usize, height: usize) -> bool {
        let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
        self.points
            .iter()
            .all(|p| (0.0..=xm).contains(&p.x) && (0.0..=ym).contains(&p.y))
    }

    /// Clamps every point into the frame; true if anything moved.
    pub fn clamp_to_frame(&mut self, width: usize, height: usize) -> bool {
        let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
        let mut moved = false;
        for p in self.points.iter_mut() {
            let (x, y) = (p.x.clamp(0.0, xm), p.y.clamp(0.0, ym));
            moved |= x != p.x || y != p.y;
            *p = Point::new(x, y);
        }
        moved
    }
}

/// Triangles over `landmarks ++ anchors`. Anchors are fixed points (frame
/// corners) that do not move under warping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Number of leading vertices that are landmarks; the rest are anchors.
    pub landmark_count: usize,
}

impl Triangulation {
    /// Delaunay triangulation of the landmarks plus the four frame corners.
    pub fn with_frame_anchors(
        landmarks: &LandmarkSet,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let mut vertices = landmarks.points.clone();
        vertices.extend(frame_corners(width, height));
        let mut tri = build_triangulation(&vertices)?;
        tri.landmark_count = landmarks.len();
        Ok(tri)
    }

    pub fn anchors(&self) -> &[Point] {
        &self.vertices[self.landmark_count..]
    }

    /// Landmarks followed by this triangulation's anchors.
    pub fn full_vertices(&self, landmarks: &LandmarkSet) -> Result<Vec<Point>> {
        if landmarks.len() != self.landmark_count {
            return Err(Error::param(format!(
                "triangulation has {} landmarks, got {}",
                self.landmark_count,
                landmarks.len()
            )));
        }
        let mut v = landmarks.points.clone();
        v.extend_from_slice(self.anchors());
        Ok(v)
    }
}

pub fn frame_corners(width: usize, height: usize) -> [Point; 4] {
    let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(xm, 0.0),
        Point::new(xm, ym),
        Point::new(0.0, ym),
    ]
}

/// Twice the signed area of `abc`; positive when counter-clockwise in a
/// y-up frame.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` is strictly inside the circumcircle of the
/// counter-clockwise triangle `abc`.
pub fn in_circle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Delaunay triangulation by incremental Bowyer–Watson insertion in index
/// order. Points on an existing circumcircle do not invalidate it, so
/// cocircular ties resolve in favour of the lower-indexed points.
///
/// Every returned triangle is counter-clockwise (in the `orient` sense).
pub fn build_triangulation(points: &[Point]) -> Result<Triangulation> {
    if points.len() < 3 {
        return Err(Error::Geometry(format!(
            "need at least 3 vertices, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Geometry("vertex coordinates must be finite".into()));
    }
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        minx = minx.min(p.x);
        miny = miny.min(p.y);
        maxx = maxx.max(p.x);
        maxy = maxy.max(p.y);
    }
    let span = (maxx - minx).max(maxy - miny).max(1e-12);
    let area_tol = span * span * 1e-12;
    let a0 = points[0];
    let non_collinear = points
        .iter()
        .any(|&p| points.iter().any(|&q| orient(a0, p, q).abs() > area_tol));
    if !non_collinear {
        return Err(Error::Geometry("all vertices are collinear".into()));
    }

    let n = points.len();
    let (cx, cy) = ((minx + maxx) / 2.0, (miny + maxy) / 2.0);
    let big = span * 1e4;
    let mut verts: Vec<Point> = points.to_vec();
    verts.push(Point::new(cx - 2.0 * big, cy - big));
    verts.push(Point::new(cx + 2.0 * big, cy - big));
    verts.push(Point::new(cx, cy + 2.0 * big));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let eps = span.powi(4) * 1e-12;
    for (i, &p) in points.iter().enumerate() {
        if points[..i]
            .iter()
            .any(|q| (q.x - p.x).abs() <= 1e-12 * span && (q.y - p.y).abs() <= 1e-12 * span)
        {
            return Err(Error::Geometry(format!(
                "vertex {i} duplicates an earlier vertex"
            )));
        }
        let mut bad = Vec::new();
        let mut keep = Vec::with_capacity(tris.len());
        for t in tris.drain(..) {
            if in_circle(verts[t[0]], verts[t[1]], verts[t[2]], p) > eps {
                bad.push(t);
            } else {
                keep.push(t);
            }
        }
        tris = keep;
        // Boundary of the cavity: edges of bad triangles not shared by two.
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for t in &bad {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if let Some(pos) = edges.iter().position(|&(x, y)| x == b && y == a) {
                    edges.swap_remove(pos);
                } else {
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();
        for (a, b) in edges {
            let t = [a, b, i];
            if orient(verts[a], verts[b], p).abs() > area_tol {
                tris.push(t);
            }
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    tris.retain(|t| orient(points[t[0]], points[t[1]], points[t[2]]).abs() > area_tol);
    for t in tris.iter_mut() {
        if orient(points[t[0]], points[t[1]], points[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    tris.sort_unstable();
    Ok(Triangulation {
        vertices: points.to_vec(),
        triangles: tris,
        landmark_count: n,
    })
}

/// Convex hull (counter-clockwise, Andrew's monotone chain).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Inclusive point-in-convex-polygon test for a counter-clockwise hull.
pub fn inside_convex(hull: &[Point], p: Point) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| orient(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-9)
}
