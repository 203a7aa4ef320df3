//! Dense matrix primitives: the labelled [`DataMatrix`], column
//! standardization, a one-sided Jacobi SVD, soft-thresholding and a
//! conditioning-checked least-squares solver.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns with sample standard deviation at or below this are rejected.
pub const VARIANCE_EPS: f64 = 1e-12;

/// Relative singular-value floor below which a design is treated as singular.
pub const CONDITION_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Dense `n x m` real matrix with unique column labels.
///
/// Every entry is finite and both dimensions are at least one.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    col_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, col_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidMatrix(format!(
                "empty matrix ({} x {})",
                values.nrows(),
                values.ncols()
            )));
        }
        if col_names.len() != values.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "{} column names for {} columns",
                col_names.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::with_capacity(col_names.len());
        for name in &col_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidMatrix(format!("duplicate column name `{name}`")));
            }
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::InvalidMatrix(format!(
                "non-finite value {} at ({i}, {j})",
                values[(i, j)]
            )));
        }
        Ok(Self { values, col_names })
    }

    /// Builds a matrix with generated names `prefix0`, `prefix1`, ...
    pub fn with_prefix(values: DMatrix<f64>, prefix: &str) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("{prefix}{j}")).collect();
        Self::new(values, names)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64], col_names: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{} values for a {rows} x {cols} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data), col_names)
    }

    pub fn from_rows(rows: &[Vec<f64>], col_names: Vec<String>) -> Result<Self> {
        let cols = col_names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix(format!(
                "row {bad} has {} values, expected {cols}",
                rows[bad].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, &flat, col_names)
    }

    pub fn from_columns(columns: &[Vec<f64>], col_names: Vec<String>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidMatrix("ragged columns".into()));
        }
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        Self::new(DMatrix::from_column_slice(rows, columns.len(), &flat), col_names)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.col_names.iter().position(|c| c == name)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.values.transpose().as_slice().to_vec()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows()).map(|i| self.row(i)).collect()
    }

    /// Same values under new column labels.
    pub fn renamed(&self, col_names: Vec<String>) -> Result<Self> {
        Self::new(self.values.clone(), col_names)
    }

    /// Replaces the values, keeping the labels.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::ShapeMismatch(format!(
                "expected {:?}, got {:?}",
                self.values.shape(),
                values.shape()
            )));
        }
        Self::new(values, self.col_names.clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidMatrix("row selection is empty".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::ShapeMismatch(format!("row {bad} out of {}", self.nrows())));
        }
        Ok(Self {
            values: self.values.select_rows(rows),
            col_names: self.col_names.clone(),
        })
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.ncols()) {
            return Err(Error::ShapeMismatch(format!("column {bad} out of {}", self.ncols())));
        }
        let names = cols.iter().map(|&c| self.col_names[c].clone()).collect();
        Self::new(self.values.select_columns(cols), names)
    }

    /// Column-wise concatenation `[self, other]`.
    pub fn hstack(&self, other: &DataMatrix) -> Result<Self> {
        if self.nrows() != other.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "cannot stack {} rows with {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        let mut values = DMatrix::zeros(self.nrows(), self.ncols() + other.ncols());
        values.columns_mut(0, self.ncols()).copy_from(&self.values);
        values.columns_mut(self.ncols(), other.ncols()).copy_from(&other.values);
        let names = self.col_names.iter().chain(&other.col_names).cloned().collect();
        Self::new(values, names)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }
}

/// Per-column location and scale recorded by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub col_names: Vec<String>,
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
}

impl StandardizationParams {
    /// Standardizes `m` with these (typically training-set) parameters.
    pub fn apply(&self, m: &DataMatrix) -> Result<DataMatrix> {
        self.check(m)?;
        let mut values = m.values().clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.means[j]) / self.stdevs[j]);
        }
        m.with_values(values)
    }

    /// Maps standardized values back to original units.
    pub fn invert(&self, m: &DataMatrix) -> Result<DataMatrix> {
        self.check(m)?;
        let mut values = m.values().clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.apply(|v| *v = *v * self.stdevs[j] + self.means[j]);
        }
        m.with_values(values)
    }

    fn check(&self, m: &DataMatrix) -> Result<()> {
        if m.ncols() != self.means.len() {
            return Err(Error::ShapeMismatch(format!(
                "standardization fitted on {} columns, got {}",
                self.means.len(),
                m.ncols()
            )));
        }
        Ok(())
    }
}

/// Sample (n-1) standard deviation.
pub fn sample_stdev(col: &[f64]) -> f64 {
    let n = col.len();
    if n < 2 {
        return 0.0;
    }
    let mean = col.iter().sum::<f64>() / n as f64;
    let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Centers every column and scales it to unit sample standard deviation.
pub fn standardize(m: &DataMatrix) -> Result<(DataMatrix, StandardizationParams)> {
    let mut means = Vec::with_capacity(m.ncols());
    let mut stdevs = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let col = m.column(j);
        let sd = sample_stdev(&col);
        if sd <= VARIANCE_EPS {
            return Err(Error::ZeroVarianceColumn(m.col_names()[j].clone()));
        }
        means.push(col.iter().sum::<f64>() / col.len() as f64);
        stdevs.push(sd);
    }
    let params = StandardizationParams {
        col_names: m.col_names().to_vec(),
        means,
        stdevs,
    };
    let out = params.apply(m)?;
    Ok((out, params))
}

/// Thin singular value decomposition `M ~ U diag(D) V'` truncated to `k` terms.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left singular vectors, `n x k`.
    pub u: DMatrix<f64>,
    /// Singular values, nonincreasing.
    pub d: Vec<f64>,
    /// Right singular vectors, `m x k`.
    pub v: DMatrix<f64>,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.d[j];
        }
        scaled * self.v.transpose()
    }

    fn truncate(mut self, k: usize) -> Self {
        self.u = self.u.columns(0, k).into_owned();
        self.v = self.v.columns(0, k).into_owned();
        self.d.truncate(k);
        self
    }
}

/// Rank-`k` truncated SVD of `m`, `1 <= k <= min(n, m)`.
pub fn truncated_svd(m: &DataMatrix, k: usize) -> Result<SvdResult> {
    truncated_svd_raw(m.values(), k)
}

pub(crate) fn truncated_svd_raw(m: &DMatrix<f64>, k: usize) -> Result<SvdResult> {
    let max = m.nrows().min(m.ncols());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    Ok(thin_svd(m)?.truncate(k))
}

/// All `min(n, m)` singular values, nonincreasing.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(thin_svd(m)?.d)
}

/// Full thin SVD with canonical column signs and ordering.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<SvdResult> {
    let mut svd = if m.nrows() >= m.ncols() {
        jacobi_tall(m)?
    } else {
        let t = jacobi_tall(&m.transpose())?;
        SvdResult { u: t.v, d: t.d, v: t.u }
    };
    canonicalize(&mut svd);
    Ok(svd)
}

/// One-sided (Hestenes) Jacobi on a matrix with `n >= m`.
fn jacobi_tall(m: &DMatrix<f64>) -> Result<SvdResult> {
    let (n, cols) = m.shape();
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);

    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure(MAX_SWEEPS));
    }

    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let d: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = v.select_columns(&order);
    let mut u = DMatrix::zeros(n, cols);
    for (dst, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            u.set_column(dst, &(w.column(j) / norms[j]));
        }
    }
    orthonormalize_columns(&mut u);
    Ok(SvdResult { u, d, v })
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let mp = m[(i, p)];
        let mq = m[(i, q)];
        m[(i, p)] = c * mp - s * mq;
        m[(i, q)] = s * mp + c * mq;
    }
}

/// Modified Gram-Schmidt in column order; columns that collapse (zero or
/// near-zero singular values) are replaced by completing basis vectors.
fn orthonormalize_columns(u: &mut DMatrix<f64>) {
    let (n, k) = u.shape();
    let mut next_basis = 0;
    for j in 0..k {
        let mut col = u.column(j).into_owned();
        for _ in 0..2 {
            for l in 0..j {
                let proj = u.column(l).dot(&col);
                col.axpy(-proj, &u.column(l), 1.0);
            }
        }
        let norm = col.norm();
        if norm > 0.5 {
            u.set_column(j, &(col / norm));
            continue;
        }
        // Complete the basis with the first standard vector not already spanned.
        loop {
            let mut e = DVector::zeros(n);
            e[next_basis % n] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for l in 0..j {
                    let proj = u.column(l).dot(&e);
                    e.axpy(-proj, &u.column(l), 1.0);
                }
            }
            let norm = e.norm();
            if norm > 1e-3 {
                u.set_column(j, &(e / norm));
                break;
            }
        }
    }
}

/// Largest-magnitude entry of each right vector positive; equal singular
/// values ordered by lexicographic comparison of the right vectors.
fn canonicalize(svd: &mut SvdResult) {
    let k = svd.d.len();
    for j in 0..k {
        let col = svd.v.column(j);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            svd.v.column_mut(j).neg_mut();
            svd.u.column_mut(j).neg_mut();
        }
    }

    let scale = svd.d.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-12 * scale;
    let mut order: Vec<usize> = (0..k).collect();
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && tie(svd.d[start], svd.d[end]) {
            end += 1;
        }
        if end - start > 1 {
            let v = &svd.v;
            order[start..end].sort_by(|&a, &b| {
                v.column(a)
                    .iter()
                    .zip(v.column(b).iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
        start = end;
    }
    if order.iter().enumerate().any(|(i, &o)| i != o) {
        svd.u = svd.u.select_columns(&order);
        svd.v = svd.v.select_columns(&order);
        svd.d = order.iter().map(|&j| svd.d[j]).collect();
    }
}

/// Elementwise `sign(x) * max(|x| - theta, 0)`.
pub fn soft_threshold(x: &[f64], theta: f64) -> Vec<f64> {
    debug_assert!(theta >= 0.0);
    x.iter()
        .map(|&v| {
            let shrunk = v.abs() - theta;
            if shrunk > 0.0 {
                v.signum() * shrunk
            } else {
                0.0
            }
        })
        .collect()
}

/// Least-squares solver for a fixed design, backed by its thin SVD.
///
/// Construction fails with [`Error::SingularDesign`] when the smallest
/// singular value is not above `CONDITION_TOL` times the largest.
#[derive(Clone, Debug)]
pub struct LsSolver {
    u: DMatrix<f64>,
    d: Vec<f64>,
    v: DMatrix<f64>,
}

impl LsSolver {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() < x.ncols() {
            return Err(Error::SingularDesign);
        }
        let svd = thin_svd(x)?;
        let largest = svd.d[0];
        let smallest = *svd.d.last().expect("non-empty design");
        if !(largest > 0.0) || smallest <= CONDITION_TOL * largest {
            return Err(Error::SingularDesign);
        }
        Ok(Self {
            u: svd.u,
            d: svd.d,
            v: svd.v,
        })
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// Coefficients `argmin_beta ||y - X beta||` for each column of `y`.
    pub fn solve_many(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut uty = self.u.transpose() * y;
        for (i, mut row) in uty.row_iter_mut().enumerate() {
            row /= self.d[i];
        }
        &self.v * uty
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        self.solve_many(&m).column(0).into_owned()
    }

    /// Orthogonal projection of each column of `y` onto span(X).
    pub fn project(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.u * (self.u.transpose() * y)
    }

    /// `y - project(y)`, re-orthogonalized once.
    pub fn residual(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = y - self.project(y);
        r -= self.project(&r);
        r
    }
}

/// `argmin_beta ||y - X beta||_2`.
pub fn least_squares(x: &DataMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let solver = LsSolver::new(x.values())?;
    Ok(solver.solve(&DVector::from_column_slice(y)).as_slice().to_vec())
}

/// Maximum absolute entry.
pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn single_column(values: &[f64]) -> DataMatrix {
        DataMatrix::from_columns(&[values.to_vec()], vec!["x".into()]).unwrap()
    }

    #[test]
    fn rejects_invalid_construction() {
        let nan = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(
            DataMatrix::new(nan, vec!["a".into(), "b".into()]),
            Err(Error::InvalidMatrix(_))
        ));
        let dup = DMatrix::zeros(2, 2);
        assert!(DataMatrix::new(dup, vec!["a".into(), "a".into()]).is_err());
        assert!(DataMatrix::new(DMatrix::zeros(0, 2), vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn constant_column_is_zero_variance() {
        let err = standardize(&single_column(&[1.0, 1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::ZeroVarianceColumn(name) if name == "x"));
    }

    #[test]
    fn standardize_hand_arithmetic() {
        // mean 4, sample sd sqrt((4 + 0 + 4) / 2) = 2
        let (out, params) = standardize(&single_column(&[2.0, 4.0, 6.0])).unwrap();
        assert_abs_diff_eq!(params.means[0], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(params.stdevs[0], 2.0, epsilon = 1e-15);
        assert_eq!(out.column(0), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn standardize_is_idempotent_on_standardized_input() {
        let (once, _) = standardize(&DataMatrix::with_prefix(random_matrix(30, 4, 3), "c").unwrap()).unwrap();
        let (twice, params) = standardize(&once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        for j in 0..4 {
            assert_abs_diff_eq!(params.means[j], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(params.stdevs[j], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn svd_of_identity_and_diagonal() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let svd = truncated_svd_raw(&eye, 3).unwrap();
        for d in &svd.d {
            assert_abs_diff_eq!(*d, 1.0, epsilon = 1e-15);
        }
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let svd = truncated_svd_raw(&diag, 2).unwrap();
        assert_abs_diff_eq!(svd.d[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(svd.d[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_matches_eigendecomposition_of_gram() {
        // Independent route: eigenvalues of M'M are the squared singular values.
        let m = random_matrix(5, 3, 11);
        let svd = truncated_svd_raw(&m, 3).unwrap();
        let eig = SymmetricEigen::new(m.transpose() * &m);
        let mut expected: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in svd.d.iter().zip(&expected) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
        let rel = (&m - svd.reconstruct()).norm() / m.norm();
        assert!(rel <= 1e-8, "relative reconstruction error {rel}");
    }

    #[test]
    fn wide_matrix_svd_reconstructs() {
        let m = random_matrix(3, 7, 5);
        let svd = truncated_svd_raw(&m, 3).unwrap();
        assert!((&m - svd.reconstruct()).norm() <= 1e-12 * m.norm());
        assert_eq!(svd.v.shape(), (7, 3));
    }

    #[test]
    fn svd_rank_out_of_range() {
        let m = random_matrix(4, 3, 1);
        assert!(matches!(truncated_svd_raw(&m, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(
            truncated_svd_raw(&m, 4),
            Err(Error::RankOutOfRange { k: 4, max: 3 })
        ));
    }

    #[test]
    fn rank_deficient_svd_has_orthonormal_factors() {
        let mut m = random_matrix(6, 4, 9);
        let c0 = m.column(0).into_owned();
        m.set_column(3, &(c0 * 2.0));
        let svd = truncated_svd_raw(&m, 4).unwrap();
        assert!(svd.d[3] < 1e-12);
        let utu = svd.u.transpose() * &svd.u;
        assert!((utu - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn svd_signs_are_canonical() {
        let m = random_matrix(8, 3, 21);
        let svd = truncated_svd_raw(&(-&m), 3).unwrap();
        for col in svd.v.column_iter() {
            let pivot = col
                .iter()
                .copied()
                .fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn truncation_beats_random_orthonormal_bases() {
        let m = random_matrix(12, 5, 4);
        let k = 2;
        let svd = truncated_svd_raw(&m, k).unwrap();
        let best = (&m - svd.reconstruct()).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let g = DMatrix::from_fn(5, k, |_, _| rng.random_range(-1.0..1.0));
            let q = g.qr().q();
            let err = (&m - &m * &q * q.transpose()).norm();
            assert!(best <= err + 1e-12);
        }
    }

    #[test]
    fn soft_threshold_definition() {
        assert_eq!(soft_threshold(&[0.5], 1.0), vec![0.0]);
        assert_eq!(soft_threshold(&[2.0, -3.0], 1.0), vec![1.0, -2.0]);
        let x = [0.3, -1.7, 0.0, 4.2];
        assert_eq!(soft_threshold(&x, 0.0), x.to_vec());
    }

    #[test]
    fn least_squares_single_column_matches_ratio() {
        let b = [1.0, -2.0, 0.5, 3.0];
        let y = [0.7, -1.1, 2.0, 1.3];
        let x = single_column(&b);
        let beta = least_squares(&x, &y).unwrap();
        let expected = b.iter().zip(&y).map(|(b, y)| b * y).sum::<f64>() / b.iter().map(|b| b * b).sum::<f64>();
        assert_abs_diff_eq!(beta[0], expected, epsilon = 1e-14);
    }

    #[test]
    fn least_squares_orthonormal_design() {
        let q = random_matrix(6, 2, 8).qr().q();
        let x = DataMatrix::with_prefix(q.clone(), "q").unwrap();
        let y: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 1.0).collect();
        let beta = least_squares(&x, &y).unwrap();
        let expected = q.transpose() * DVector::from_column_slice(&y);
        assert_abs_diff_eq!(beta[0], expected[0], epsilon = 1e-12);
        assert_abs_diff_eq!(beta[1], expected[1], epsilon = 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations_by_hand() {
        let x = random_matrix(4, 2, 17);
        let y = [0.25, -1.5, 0.75, 2.0];
        // Normal equations [a b; b c] beta = [r; s], solved by Cramer's rule.
        let (mut a, mut b, mut c, mut r, mut s) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..4 {
            a += x[(i, 0)] * x[(i, 0)];
            b += x[(i, 0)] * x[(i, 1)];
            c += x[(i, 1)] * x[(i, 1)];
            r += x[(i, 0)] * y[i];
            s += x[(i, 1)] * y[i];
        }
        let det = a * c - b * b;
        let expected = [(c * r - b * s) / det, (a * s - b * r) / det];
        let beta = least_squares(&DataMatrix::with_prefix(x.clone(), "x").unwrap(), &y).unwrap();
        assert_abs_diff_eq!(beta[0], expected[0], epsilon = 1e-10);
        assert_abs_diff_eq!(beta[1], expected[1], epsilon = 1e-10);
        let resid = DVector::from_column_slice(&y) - &x * DVector::from_vec(beta);
        assert!((x.transpose() * resid).amax() < 1e-8);
    }

    #[test]
    fn least_squares_rejects_singular_design() {
        let col = vec![1.0, 2.0, 3.0];
        let x = DataMatrix::from_columns(&[col.clone(), col], vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(
            least_squares(&x, &[1.0, 0.0, 1.0]),
            Err(Error::SingularDesign)
        ));
    }

    proptest! {
        #[test]
        fn standardize_roundtrip(seed in 0u64..1000, rows in 3usize..20, cols in 1usize..5) {
            let raw = DataMatrix::with_prefix(random_matrix(rows, cols, seed) * 7.0, "c").unwrap();
            let (std, params) = standardize(&raw).unwrap();
            let back = params.invert(&std).unwrap();
            for (a, b) in raw.values().iter().zip(back.values().iter()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }

        #[test]
        fn full_rank_svd_reconstructs(seed in 0u64..1000, rows in 1usize..12, cols in 1usize..12) {
            let m = random_matrix(rows, cols, seed);
            let svd = truncated_svd_raw(&m, rows.min(cols)).unwrap();
            prop_assert!((&m - svd.reconstruct()).norm() <= 1e-8 * m.norm().max(1.0));
            let vtv = svd.v.transpose() * &svd.v;
            prop_assert!((vtv - DMatrix::<f64>::identity(svd.rank(), svd.rank())).amax() <= 1e-8);
            prop_assert!(svd.d.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn soft_threshold_is_contraction(
            x in prop::collection::vec(-10.0f64..10.0, 1..16),
            shift in prop::collection::vec(-3.0f64..3.0, 16),
            theta in 0.0f64..5.0,
        ) {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let sx = soft_threshold(&x, theta);
            let sy = soft_threshold(&y, theta);
            let lhs: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let rhs: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(lhs <= rhs + 1e-12);
            for (s, v) in sx.iter().zip(&x) {
                prop_assert!(s.abs() <= v.abs());
                prop_assert!(*s == 0.0 || s.signum() == v.signum());
            }
        }
    }
}
