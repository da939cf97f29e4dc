//! Dense linear-algebra primitives shared by the teacher, the student and the
//! analysis code: PCA, ordinary least squares, R², seeded Gaussian sampling
//! and a central-difference gradient checker.
//!
//! Everything here works in `f64`. Matrices are row-major; rows are
//! observations and columns are variables throughout.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::param(format!(
                "matrix of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::param(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::param(format!(
                "cannot stack {} rows beside {} rows",
                self.rows, other.rows
            )));
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + other.cols));
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::param(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Column-wise mean.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, v) in mean.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Column-wise sample standard deviation (n − 1 denominator).
    pub fn column_sds(&self) -> Vec<f64> {
        let mean = self.column_means();
        let mut ss = vec![0.0; self.cols];
        for r in 0..self.rows {
            for ((s, v), m) in ss.iter_mut().zip(self.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let dof = (self.rows.max(2) - 1) as f64;
        ss.into_iter().map(|s| (s / dof).sqrt()).collect()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(m.row(r).iter().copied());
        }
        Self { rows, cols, data }
    }
}

/// Principal-component model: `x ≈ mean + componentsᵀ · b`.
///
/// Components are stored as orthonormal rows with raw (unwhitened) scaling;
/// `component_sds` carries the per-component training spread separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: DenseMatrix,
    pub component_sds: Vec<f64>,
}

impl PcaModel {
    /// Number of retained components.
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    /// Dimension of the modelled vectors.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `components · (x − mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::param(format!(
                "projection input has length {}, model dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok((0..self.k())
            .map(|i| {
                self.components
                    .row(i)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum()
            })
            .collect())
    }

    /// `mean + componentsᵀ · b`.
    pub fn reconstruct(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.k() {
            return Err(Error::param(format!(
                "expected {} coefficients, got {}",
                self.k(),
                b.len()
            )));
        }
        let mut out = self.mean.clone();
        for (i, &coef) in b.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.components.row(i)) {
                *o += coef * c;
            }
        }
        Ok(out)
    }
}

/// Fits a `k`-component PCA model to the rows of `data`.
///
/// Uses a thin SVD of the centred data. Each component is signed so its
/// largest-magnitude entry is positive. Directions with no variance still get
/// orthonormal components, with zero standard deviation.
pub fn fit_pca(data: &DenseMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::param(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::param(format!(
            "k = {k} outside 1..={} for {n} rows of dimension {d}",
            (n - 1).min(d)
        )));
    }
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("PCA input contains non-finite values"));
    }

    let mean = data.column_means();
    let mut centred = data.to_nalgebra();
    for r in 0..n {
        for c in 0..d {
            centred[(r, c)] -= mean[c];
        }
    }
    let svd = centred.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not return right singular vectors".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let scale = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let tol = scale * (n.max(d) as f64) * f64::EPSILON;
    let dof = (n - 1) as f64;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut sds = Vec::with_capacity(k);
    for &idx in order.iter() {
        if basis.len() == k {
            break;
        }
        let s = svd.singular_values[idx];
        if s <= tol {
            break;
        }
        let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
        if orthonormalize_against(&mut v, &basis) {
            basis.push(v);
            sds.push(s / dof.sqrt());
        }
    }
    // Zero-variance directions: complete the basis with orthogonalized unit
    // vectors so the model stays well formed.
    let mut e = 0;
    while basis.len() < k && e < d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        e += 1;
        if orthonormalize_against(&mut v, &basis) {
            basis.push(v);
            sds.push(0.0);
        }
    }
    for v in basis.iter_mut() {
        canonical_sign(v);
    }

    let components = DenseMatrix::from_rows(&basis)?;
    Ok(PcaModel {
        mean,
        components,
        component_sds: sds,
    })
}

/// Two passes of modified Gram–Schmidt; false if `v` collapses.
fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let start = norm(v);
    if start == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    let n = norm(v);
    if n < 1e-10 * start {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Affine map `y = x · coefficients + intercept` from `p` inputs to `q` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    /// `p × q`.
    pub coefficients: DenseMatrix,
    pub intercept: Vec<f64>,
    /// Set when the design matrix was rank deficient and the minimum-norm
    /// solution was returned.
    #[serde(default)]
    pub rank_deficient: bool,
}

impl LinearMap {
    pub fn inputs(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn outputs(&self) -> usize {
        self.coefficients.cols()
    }

    /// `X · coefficients + intercept`, intercept broadcast over rows.
    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.inputs() {
            return Err(Error::param(format!(
                "map expects {} inputs, matrix has {} columns",
                self.inputs(),
                x.cols()
            )));
        }
        let mut out = x.matmul(&self.coefficients)?;
        for r in 0..out.rows() {
            out.row_mut(r)
                .iter_mut()
                .zip(&self.intercept)
                .for_each(|(o, b)| *o += b);
        }
        Ok(out)
    }
}

/// Free-function form of [`LinearMap::predict`].
pub fn predict_linear(map: &LinearMap, x: &DenseMatrix) -> Result<DenseMatrix> {
    map.predict(x)
}

/// Least-squares fit of `Y ≈ X · C (+ intercept)`.
///
/// The intercept is handled by centring; the centred problem is solved with
/// an SVD, which yields the minimum-norm solution when `X` is rank deficient.
pub fn ols_fit(x: &DenseMatrix, y: &DenseMatrix, with_intercept: bool) -> Result<LinearMap> {
    let (n, p, q) = (x.rows(), x.cols(), y.cols());
    if y.rows() != n {
        return Err(Error::param(format!(
            "X has {n} rows but Y has {}",
            y.rows()
        )));
    }
    let needed = if with_intercept { p + 1 } else { p };
    // Exactly determined systems are accepted (two points define a line).
    if n < needed.max(1) {
        return Err(Error::param(format!(
            "least squares needs at least {needed} rows, got {n}"
        )));
    }
    if p == 0 {
        let intercept = if with_intercept {
            y.column_means()
        } else {
            vec![0.0; q]
        };
        return Ok(LinearMap {
            coefficients: DenseMatrix::zeros(0, q),
            intercept,
            rank_deficient: false,
        });
    }

    let (x_mean, y_mean) = if with_intercept {
        (x.column_means(), y.column_means())
    } else {
        (vec![0.0; p], vec![0.0; q])
    };
    let mut xc = x.to_nalgebra();
    for r in 0..n {
        for c in 0..p {
            xc[(r, c)] -= x_mean[c];
        }
    }
    let mut yc = y.to_nalgebra();
    for r in 0..n {
        for c in 0..q {
            yc[(r, c)] -= y_mean[c];
        }
    }

    let svd = xc.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let tol = smax * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let coef = svd
        .solve(&yc, tol)
        .map_err(|e| Error::Numeric(format!("least-squares solve failed: {e}")))?;
    let coefficients = DenseMatrix::from_nalgebra(&coef);

    let intercept: Vec<f64> = (0..q)
        .map(|j| {
            y_mean[j]
                - (0..p)
                    .map(|i| x_mean[i] * coefficients.get(i, j))
                    .sum::<f64>()
        })
        .collect();
    if coefficients.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(LinearMap {
        coefficients,
        intercept,
        rank_deficient: rank < p,
    })
}

/// `1 − Σᵢ‖Yᵢ − Ŷᵢ‖² / Σᵢ‖Yᵢ − Ȳ‖²` with `Ȳ` the mean row of `Y`.
pub fn r_squared(y: &DenseMatrix, y_hat: &DenseMatrix) -> Result<f64> {
    if y.rows() != y_hat.rows() || y.cols() != y_hat.cols() {
        return Err(Error::param(format!(
            "R² needs equal shapes, got {}x{} and {}x{}",
            y.rows(),
            y.cols(),
            y_hat.rows(),
            y_hat.cols()
        )));
    }
    let mean = y.column_means();
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for r in 0..y.rows() {
        for ((a, b), m) in y.row(r).iter().zip(y_hat.row(r)).zip(&mean) {
            ss_res += (a - b) * (a - b);
            ss_tot += (a - m) * (a - m);
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::Numeric(
            "R² undefined: target is constant across rows".into(),
        ));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Independent zero-mean normals with the given standard deviations.
pub fn gaussian_vector<R: Rng + ?Sized>(sds: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if let Some(bad) = sds.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::param(format!(
            "standard deviations must be finite and non-negative, got {bad}"
        )));
    }
    Ok(sds
        .iter()
        .map(|&s| {
            let u: f64 = rng.sample(StandardNormal);
            s * u
        })
        .collect())
}

/// Compares `grad` against central differences of `f` at `x`.
///
/// Returns the largest per-coordinate relative error
/// `|a − b| / max(|a|, |b|, 1e−8)`.
pub fn finite_diff_check<F>(mut f: F, grad: &[f64], x: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if grad.len() != x.len() {
        return Err(Error::param(format!(
            "gradient has length {}, point has length {}",
            grad.len(),
            x.len()
        )));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::param(format!("step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is not finite near coordinate {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pca_rank_one_pair() {
        let data = DenseMatrix::from_rows(&[[-1.0, 0.0], [1.0, 0.0]]).unwrap();
        let m = fit_pca(&data, 1).unwrap();
        assert_eq!(m.mean, vec![0.0, 0.0]);
        assert!((m.components.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(m.components.get(0, 1).abs() < 1e-12);
        assert!((m.component_sds[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pca_identical_rows_gives_zero_sds() {
        let data = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]; 5]).unwrap();
        let m = fit_pca(&data, 2).unwrap();
        assert_eq!(m.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(m.component_sds, vec![0.0, 0.0]);
        let gram = m.components.matmul(&m.components.transpose()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_rejects_bad_k() {
        let data = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
        assert!(matches!(fit_pca(&data, 0), Err(Error::Parameter(_))));
        assert!(matches!(fit_pca(&data, 3), Err(Error::Parameter(_))));
        assert!(fit_pca(&data, 2).is_ok());
    }

    #[test]
    fn non_finite_matrix_is_rejected() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn project_mean_and_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| gaussian_vector(&[3.0, 2.0, 1.0, 0.5], &mut rng).unwrap())
            .collect();
        let m = fit_pca(&DenseMatrix::from_rows(&rows).unwrap(), 3).unwrap();
        assert!(m.project(&m.mean).unwrap().iter().all(|v| v.abs() < 1e-12));
        let x: Vec<f64> = m
            .mean
            .iter()
            .zip(m.components.row(0))
            .map(|(a, c)| a + 2.0 * c)
            .collect();
        let b = m.project(&x).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12);
        assert!(b[1].abs() < 1e-12 && b[2].abs() < 1e-12);
        assert_eq!(m.reconstruct(&[0.0; 3]).unwrap(), m.mean);
        assert!(m.project(&[0.0; 3]).is_err());
        assert!(m.reconstruct(&[0.0; 4]).is_err());
    }

    #[test]
    fn ols_small_exact_cases() {
        let x = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[0.0], [2.0]]).unwrap();
        // n = 2, p = 1 with intercept: exactly determined, still accepted.
        let err = ols_fit(&x, &y, true);
        let m = match err {
            Ok(m) => m,
            Err(e) => panic!("{e}"),
        };
        assert!((m.coefficients.get(0, 0) - 2.0).abs() < 1e-12);
        assert!(m.intercept[0].abs() < 1e-12);

        let x = DenseMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[3.0], [5.0], [7.0]]).unwrap();
        let m = ols_fit(&x, &y, true).unwrap();
        assert!((m.coefficients.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((m.intercept[0] - 1.0).abs() < 1e-12);
        assert!(!m.rank_deficient);
    }

    #[test]
    fn ols_rank_deficient_is_flagged() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let m = ols_fit(&x, &y, true).unwrap();
        assert!(m.rank_deficient);
        // minimum norm: coefficients proportional to (1, 2), fitted exactly
        let pred = m.predict(&x).unwrap();
        assert!((r_squared(&y, &pred).unwrap() - 1.0).abs() < 1e-12);
        let (a, b) = (m.coefficients.get(0, 0), m.coefficients.get(1, 0));
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn predict_trivial_maps() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let zero = LinearMap {
            coefficients: DenseMatrix::zeros(2, 2),
            intercept: vec![5.0, -1.0],
            rank_deficient: false,
        };
        let p = zero.predict(&x).unwrap();
        assert_eq!(p.row(0), &[5.0, -1.0]);
        assert_eq!(p.row(1), &[5.0, -1.0]);
        let id = LinearMap {
            coefficients: DenseMatrix::identity(2),
            intercept: vec![0.0, 0.0],
            rank_deficient: false,
        };
        assert_eq!(predict_linear(&id, &x).unwrap(), x);
        assert!(id.predict(&DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn r_squared_reference_values() {
        let y = DenseMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = DenseMatrix::from_rows(&[[2.0], [2.0], [2.0]]).unwrap();
        assert_eq!(r_squared(&y, &mean).unwrap(), 0.0);
        let yh = DenseMatrix::from_rows(&[[1.0], [2.0], [2.0]]).unwrap();
        assert!((r_squared(&y, &yh).unwrap() - 0.5).abs() < 1e-15);
        let flat = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert!(matches!(r_squared(&flat, &flat), Err(Error::Numeric(_))));
    }

    #[test]
    fn gaussian_vector_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(gaussian_vector(&[0.0; 4], &mut rng).unwrap(), vec![0.0; 4]);
        assert!(gaussian_vector(&[1.0, -0.1], &mut rng).is_err());
        let a = gaussian_vector(&[1.0; 8], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = gaussian_vector(&[1.0; 8], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let draws = gaussian_vector(&[2.0; 10_000], &mut rng).unwrap();
        let m = DenseMatrix::new(10_000, 1, draws).unwrap();
        let sd = m.column_sds()[0];
        assert!((1.9..=2.1).contains(&sd), "sample sd {sd}");
    }

    #[test]
    fn finite_differences() {
        let x = [0.3, -1.2, 2.5];
        let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let good: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(finite_diff_check(sq, &good, &x, 1e-4).unwrap() < 1e-8);
        let bad: Vec<f64> = x.iter().map(|a| 2.1 * a).collect();
        let e = finite_diff_check(sq, &bad, &x, 1e-4).unwrap();
        // |2.1x − 2x| / |2.1x| = 0.1 / 2.1
        assert!((e - 0.1 / 2.1).abs() < 1e-6, "{e}");
        assert_eq!(
            finite_diff_check(|_| 4.0, &[0.0; 3], &x, 1e-4).unwrap(),
            0.0
        );
        assert!(finite_diff_check(|_| f64::NAN, &[0.0], &[0.0], 1e-4).is_err());
    }
}
