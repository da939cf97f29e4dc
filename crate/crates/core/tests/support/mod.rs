//! Reference implementations and property probes shared by the property
//! tests and the acceptance suite. Everything here is written
//! independently of the library code it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use lmface::aam::{
    build_triangulation, procedural_corpus, warp_image, Point, ProceduralConfig, Triangulation,
};
use lmface::nn::{LayerSpec, Mode, Network, NetworkSpec, Shape, Tensor};
use lmface::numerics::{fit_pca, ols_fit, r_squared, DenseMatrix};
use lmface::vae::gaussian_kl;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `n × d` Gaussian matrix with column scales `scales`.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scales: &[f64]) -> DenseMatrix {
    let d = scales.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for s in scales {
            data.push(s * rng.sample::<f64, _>(StandardNormal));
        }
    }
    DenseMatrix::new(n, d, data).unwrap()
}

// ---------------------------------------------------------------------------
// Linear algebra oracles

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(i == j)).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n)
            .map(|i| m[i][i] * m[i][i])
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Sample covariance (`n − 1` denominator) of the rows of `x`.
pub fn covariance(x: &DenseMatrix) -> Vec<Vec<f64>> {
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in 0..n {
        for i in 0..d {
            let a = x.get(r, i) - mean[i];
            for j in 0..d {
                cov[i][j] += a * (x.get(r, j) - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= (n - 1) as f64);
    cov
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Least squares with intercept through the normal equations. Returns the
/// `(p + 1) × q` coefficient table whose last row is the intercept.
pub fn normal_equations(x: &DenseMatrix, y: &DenseMatrix) -> Vec<Vec<f64>> {
    let (n, p, q) = (x.rows(), x.cols(), y.cols());
    let row = |r: usize| -> Vec<f64> {
        let mut v = x.row(r).to_vec();
        v.push(1.0);
        v
    };
    let mut xtx = vec![vec![0.0; p + 1]; p + 1];
    for r in 0..n {
        let v = row(r);
        for i in 0..=p {
            for j in 0..=p {
                xtx[i][j] += v[i] * v[j];
            }
        }
    }
    let mut table = vec![vec![0.0; q]; p + 1];
    for k in 0..q {
        let mut xty = vec![0.0; p + 1];
        for r in 0..n {
            let v = row(r);
            for i in 0..=p {
                xty[i] += v[i] * y.get(r, k);
            }
        }
        let beta = solve(xtx.clone(), xty);
        for i in 0..=p {
            table[i][k] = beta[i];
        }
    }
    table
}

// ---------------------------------------------------------------------------
// Property probes. Each returns the quantity the criterion bounds.

/// `max |C Cᵀ − I|` for a PCA fit on random anisotropic data.
pub fn pca_orthonormality(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(3..12);
    let n = r.random_range(d + 2..40);
    let scales: Vec<f64> = (0..d).map(|i| 3.0 / (1.0 + i as f64)).collect();
    let x = random_matrix(&mut r, n, &scales);
    let k = r.random_range(1..=d.min(n - 1));
    let pca = fit_pca(&x, k).unwrap();
    let c = &pca.components;
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = c.row(i).iter().zip(c.row(j)).map(|(a, b)| a * b).sum();
            worst = worst.max((dot - f64::from(i == j)).abs());
        }
    }
    worst
}

/// Largest disagreement between PCA and the covariance eigen-decomposition:
/// eigenvector entries (up to sign) and variance `sd²` against eigenvalues,
/// both relative to the leading eigenvalue's scale.
pub fn pca_oracle(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(2..8);
    let n = r.random_range(d + 3..30);
    // Well separated spectrum so eigenvectors are determined.
    let scales: Vec<f64> = (0..d).map(|i| 4.0 * 0.6f64.powi(i as i32)).collect();
    let x = random_matrix(&mut r, n, &scales);
    let k = d.min(n - 1);
    let pca = fit_pca(&x, k).unwrap();
    let (values, vectors) = jacobi_eigen(&covariance(&x));
    let mut worst = 0.0f64;
    for i in 0..k {
        let c = pca.components.row(i);
        let dot: f64 = c.iter().zip(&vectors[i]).map(|(a, b)| a * b).sum();
        let sign = dot.signum();
        for (a, b) in c.iter().zip(&vectors[i]) {
            worst = worst.max((a - sign * b).abs());
        }
        let var = pca.component_sds[i].powi(2);
        worst = worst.max((var - values[i]).abs() / values[0]);
    }
    worst
}

/// Triangle-vertex and in-circle violations of a Delaunay triangulation
/// checked against every vertex, plus the relative area mismatch against
/// the convex hull.
pub fn delaunay_violations(points: &[Point], tri: &Triangulation) -> (usize, f64) {
    let mut bad = 0;
    let area = |a: Point, b: Point, c: Point| {
        0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
    };
    let mut covered = 0.0;
    for t in &tri.triangles {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        let s = area(a, b, c);
        if s <= 0.0 {
            bad += 1;
        }
        covered += s.abs();
        // Circumcentre by direct formula.
        let dd = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        let sq = |p: Point| p.x * p.x + p.y * p.y;
        let ux = (sq(a) * (b.y - c.y) + sq(b) * (c.y - a.y) + sq(c) * (a.y - b.y)) / dd;
        let uy = (sq(a) * (c.x - b.x) + sq(b) * (a.x - c.x) + sq(c) * (b.x - a.x)) / dd;
        let r2 = (a.x - ux).powi(2) + (a.y - uy).powi(2);
        for (i, p) in points.iter().enumerate() {
            if t.contains(&i) {
                continue;
            }
            let d2 = (p.x - ux).powi(2) + (p.y - uy).powi(2);
            if d2 < r2 * (1.0 - 1e-9) {
                bad += 1;
            }
        }
    }
    (bad, (covered - hull_area(points)).abs() / hull_area(points))
}

/// Monotone-chain hull area.
pub fn hull_area(points: &[Point]) -> f64 {
    let mut p: Vec<(f64, f64)> = points.iter().map(|q| (q.x, q.y)).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0
            {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
}

/// Random points in a 32×32 frame, triangulated and brute-force checked.
pub fn delaunay_probe(seed: u64) -> (usize, f64) {
    let mut r = rng(seed);
    let n = r.random_range(3..60);
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::new(r.random_range(0.0..32.0), r.random_range(0.0..32.0)))
        .collect();
    let tri = build_triangulation(&pts).unwrap();
    delaunay_violations(&pts, &tri)
}

/// Warping a procedural face onto its own landmarks: max pixel change.
pub fn warp_identity(seed: u64) -> f64 {
    let corpus = procedural_corpus(&ProceduralConfig {
        n: 20,
        seed,
        ..Default::default()
    })
    .unwrap();
    let mut worst = 0.0f64;
    for (img, lm) in corpus.images.iter().zip(&corpus.landmarks) {
        let tri = Triangulation::with_frame_anchors(lm, img.width(), img.height()).unwrap();
        let out = warp_image(img, lm, lm, &tri).unwrap();
        worst = worst.max(out.image.max_abs_diff(img));
    }
    worst
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` for one dimension by composite Simpson
/// quadrature of `q (log q − log p)` over ±14 sd.
pub fn kl_quadrature(mu: f64, logvar: f64) -> f64 {
    let sd = (0.5 * logvar).exp();
    let (lo, hi) = (mu - 14.0 * sd, mu + 14.0 * sd);
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    let f = |z: f64| {
        let log_q = -0.5 * ((z - mu) / sd).powi(2) - sd.ln() - 0.5 * std::f64::consts::TAU.ln();
        let log_p = -0.5 * z * z - 0.5 * std::f64::consts::TAU.ln();
        log_q.exp() * (log_q - log_p)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..steps {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Worst `|closed form − quadrature|` over a random multi-dimensional
/// Gaussian.
pub fn kl_probe(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(1..6);
    let mu: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
    let lv: Vec<f64> = (0..d).map(|_| r.random_range(-4.0..3.0)).collect();
    let closed = gaussian_kl(&mu, &lv);
    let numeric: f64 = mu.iter().zip(&lv).map(|(&m, &l)| kl_quadrature(m, l)).sum();
    (closed - numeric).abs()
}

/// R² of `Y` on `X` minus R² of `Y` on `X·M + c` (M invertible), where
/// `Y` is itself shifted and uniformly rescaled in the second fit.
pub fn r2_affine_invariance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = r.random_range(1..6);
    let q = r.random_range(1..5);
    let n = r.random_range(p + 5..60);
    let x = random_matrix(&mut r, n, &vec![1.0; p]);
    let w = random_matrix(&mut r, p, &vec![1.0; q]);
    let noise = random_matrix(&mut r, n, &vec![0.5; q]);
    let signal = x.matmul(&w).unwrap();
    let y = DenseMatrix::new(
        n,
        q,
        signal
            .as_slice()
            .iter()
            .zip(noise.as_slice())
            .map(|(a, b)| a + b)
            .collect(),
    )
    .unwrap();
    // Diagonally dominant, hence invertible.
    let mut m = random_matrix(&mut r, p, &vec![0.3; p]);
    for i in 0..p {
        m.set(i, i, m.get(i, i) + 2.0);
    }
    let shift: Vec<f64> = normal(&mut r, p, 5.0);
    let mut x2 = x.matmul(&m).unwrap();
    for row in 0..n {
        for c in 0..p {
            x2.set(row, c, x2.get(row, c) + shift[c]);
        }
    }
    let (scale, offset) = (r.random_range(0.1..10.0), r.random_range(-10.0..10.0));
    let y2 = DenseMatrix::new(
        n,
        q,
        y.as_slice().iter().map(|v| scale * v + offset).collect(),
    )
    .unwrap();
    let r1 = r_squared(&y, &ols_fit(&x, &y, true).unwrap().predict(&x).unwrap()).unwrap();
    let r2 = r_squared(&y2, &ols_fit(&x2, &y2, true).unwrap().predict(&x2).unwrap()).unwrap();
    (r1 - r2).abs()
}

// ---------------------------------------------------------------------------
// Gradient checks

pub const GRAD_SEEDS: u64 = 20;
const BATCH: usize = 3;

pub struct GradCase {
    pub net: Network<f64>,
    pub x: Tensor<f64>,
    pub r: Tensor<f64>,
}

/// A network with O(1) weights, an input batch and a random output
/// projection `r`, so the objective is `Σ r·f(x)`.
pub fn grad_case(spec: &NetworkSpec, input: Shape, seed: u64) -> GradCase {
    let mut rng = rng(seed);
    let mut net = Network::<f64>::new(spec.clone(), input, &mut rng).unwrap();
    let p = normal(&mut rng, net.param_count(), 0.5);
    net.set_param_vector(&p).unwrap();
    let (c, h, w) = input;
    let x = Tensor::new([BATCH, c, h, w], normal(&mut rng, BATCH * c * h * w, 1.0)).unwrap();
    let (oc, oh, ow) = net.output_shape();
    let r = Tensor::new(
        [BATCH, oc, oh, ow],
        normal(&mut rng, BATCH * oc * oh * ow, 1.0),
    )
    .unwrap();
    GradCase { net, x, r }
}

fn projection(net: &mut Network<f64>, x: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    let y = net.forward(x, Mode::Train).unwrap();
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Central differences of `f` at `x`, one per coordinate.
fn central_differences<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Analytic and numeric gradients over parameters then inputs, with the
/// analytic side computed in `f32` (`wide = false`) or `f64`.
pub fn grad_pairs(c: &GradCase, wide: bool) -> (Vec<f64>, Vec<f64>) {
    let (gp, gx) = if wide {
        let mut net = c.net.clone();
        net.zero_grad();
        net.forward(&c.x, Mode::Train).unwrap();
        let dx = net.backward(&c.r).unwrap();
        (net.grad_vector(), dx.into_data())
    } else {
        let mut net = c.net.cast::<f32>();
        net.zero_grad();
        net.forward(&c.x.cast(), Mode::Train).unwrap();
        let dx = net.backward(&c.r.cast()).unwrap();
        (
            net.grad_vector().iter().map(|v| *v as f64).collect(),
            dx.to_f64(),
        )
    };
    // The objective is evaluated in f64 at the f32-representable point so
    // both sides see the same function.
    let narrow = |t: &Tensor<f64>| t.cast::<f32>().cast::<f64>();
    let (base, x0, r) = if wide {
        (c.net.clone(), c.x.clone(), c.r.clone())
    } else {
        (
            c.net.cast::<f32>().cast::<f64>(),
            narrow(&c.x),
            narrow(&c.r),
        )
    };
    let h = 1e-5;

    let mut net = base.clone();
    let p0 = net.param_vector();
    let mut numeric = central_differences(
        |p| {
            net.set_param_vector(p).unwrap();
            projection(&mut net, &x0, &r)
        },
        &p0,
        h,
    );
    let mut net = base;
    let shape = x0.shape();
    numeric.extend(central_differences(
        |x| projection(&mut net, &Tensor::new(shape, x.to_vec()).unwrap(), &r),
        x0.data(),
        h,
    ));
    let mut analytic = gp;
    analytic.extend(gx);
    (analytic, numeric)
}

/// Largest per-coordinate `|a − n| / max(|a|, |n|, 1e−8)`, the metric of
/// `lmface::numerics::finite_diff_check`. In `f32` this is dominated by
/// rounding on coordinates many orders below the largest one.
pub fn grad_error(c: &GradCase, wide: bool) -> f64 {
    let (a, n) = grad_pairs(c, wide);
    floored_error(&a, &n, 0.0)
}

/// Per-coordinate relative error whose denominator is at least
/// `floor · ‖g‖∞`.
fn floored_error(a: &[f64], n: &[f64], floor: f64) -> f64 {
    let scale = a.iter().chain(n).fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(n)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor * scale).max(1e-8))
        .fold(0.0, f64::max)
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over the whole gradient vector.
fn normwise_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(n)).max(1e-300)
}

/// Worst errors of one precision over [`GRAD_SEEDS`] seeds.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    /// Relative error of the gradient vector.
    pub normwise: f64,
    /// Per coordinate, ignoring coordinates below 1% of the largest.
    pub coordinate: f64,
    /// Per coordinate with no floor.
    pub raw: f64,
}

pub const COORDINATE_FLOOR: f64 = 1e-2;

/// `(f32, f64)` reports over [`GRAD_SEEDS`] seeds.
pub fn grad_worst(spec: &NetworkSpec, input: Shape, seed_base: u64) -> (GradReport, GradReport) {
    let mut out = [GradReport::default(); 2];
    for s in 0..GRAD_SEEDS {
        let c = grad_case(spec, input, seed_base + s);
        for (slot, wide) in out.iter_mut().zip([false, true]) {
            let (a, n) = grad_pairs(&c, wide);
            slot.normwise = slot.normwise.max(normwise_error(&a, &n));
            slot.coordinate = slot.coordinate.max(floored_error(&a, &n, COORDINATE_FLOOR));
            slot.raw = slot.raw.max(floored_error(&a, &n, 0.0));
        }
    }
    (out[0], out[1])
}

/// One small network per layer kind.
pub fn layer_kinds() -> Vec<(&'static str, NetworkSpec, Shape)> {
    let one = |l: LayerSpec| NetworkSpec::new(vec![l]);
    let after_linear = |l: LayerSpec| NetworkSpec::new(vec![LayerSpec::Linear { out: 6 }, l]);
    vec![
        ("linear", one(LayerSpec::Linear { out: 4 }), (2, 2, 2)),
        (
            "conv",
            one(LayerSpec::Conv {
                out: 3,
                kernel: 3,
                stride: 2,
                padding: 1,
            }),
            (2, 5, 5),
        ),
        (
            "conv_transpose",
            one(LayerSpec::ConvTranspose {
                out: 2,
                kernel: 4,
                stride: 2,
                padding: 1,
            }),
            (3, 2, 2),
        ),
        ("batch_norm", one(LayerSpec::BatchNorm), (3, 2, 2)),
        ("relu", after_linear(LayerSpec::Relu), (3, 1, 1)),
        (
            "leaky_relu",
            after_linear(LayerSpec::LeakyRelu { slope: 0.2 }),
            (3, 1, 1),
        ),
        ("tanh", after_linear(LayerSpec::Tanh), (3, 1, 1)),
        (
            "reshape",
            NetworkSpec::new(vec![
                LayerSpec::Reshape {
                    channels: 2,
                    height: 3,
                    width: 2,
                },
                LayerSpec::Conv {
                    out: 1,
                    kernel: 2,
                    stride: 1,
                    padding: 0,
                },
            ]),
            (12, 1, 1),
        ),
    ]
}

/// Columns of `b` made exactly orthogonal to the intercept and to every
/// column of `a` (and to each other), by modified Gram-Schmidt.
pub fn decorrelate(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut push = |mut v: Vec<f64>, keep: bool| -> Vec<f64> {
        for _ in 0..2 {
            for u in &basis {
                let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.iter().map(|x| x / norm).collect());
        if keep {
            v
        } else {
            vec![]
        }
    };
    for j in 0..a.cols() {
        push(a.column(j), false);
    }
    let cols: Vec<Vec<f64>> = (0..b.cols()).map(|j| push(b.column(j), true)).collect();
    let mut out = DenseMatrix::zeros(n, b.cols());
    for (j, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            out.set(r, j, *v);
        }
    }
    out
}
