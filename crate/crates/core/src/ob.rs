//! Orthogonal-to-bias (OB) transform.
//!
//! Finds a rank-`k` factorization `A ~ S U'` with orthonormal `U` whose
//! reconstruction is exactly orthogonal to the sensitive columns `B`
//! (`S' B = 0`) while changing `A` as little as possible in Frobenius norm.
//! Given `U`, the optimal scores are `S = A U - B Lambda'` with
//! `Lambda_j = (B'B)^{-1} B' A u_j`, i.e. the least-squares residual of
//! `A U` on `B`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{max_abs, singular_values, thin_svd, truncated_svd_raw, DataMatrix, LsSolver};

/// How the orthonormal basis `U` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisRule {
    /// Top-`k` right singular vectors of `(I - P_B) A`. This is the exact
    /// minimizer of `||A - S U'||_F` under `S' B = 0`, since for fixed `U`
    /// the error is `||A||^2 - ||(I - P_B) A U||^2`.
    #[default]
    Residualized,
    /// Top-`k` right singular vectors of `A` itself. Coincides with
    /// `Residualized` when `B'A = 0` or `k = q`; otherwise it can leave
    /// reconstruction error on the table.
    DataSvd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObConfig {
    pub k: usize,
    pub center_check_tol: f64,
    #[serde(default)]
    pub basis: BasisRule,
}

impl ObConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            center_check_tol: 1e-8,
            basis: BasisRule::default(),
        }
    }

    pub fn with_basis(mut self, basis: BasisRule) -> Self {
        self.basis = basis;
        self
    }
}

/// Fitted OB factors.
#[derive(Clone, Debug)]
pub struct FactorPair {
    /// Scores, `n x k`, orthogonal to every column of `B`.
    pub s: DMatrix<f64>,
    /// Orthonormal basis, `q x k`.
    pub u: DMatrix<f64>,
    /// Least-squares multipliers, `k x p`; row `j` is `Lambda_j`.
    pub multipliers: DMatrix<f64>,
    /// `||A - S U'||_F` (unsquared).
    pub recon_error: f64,
    /// Same quantity for the unconstrained rank-`k` SVD.
    pub svd_error: f64,
    pub col_names: Vec<String>,
}

/// Factors whose reconstruction `scores * basis'` replaces `A`.
pub trait LowRankFactors {
    /// In-sample scores, `n x k`.
    fn scores(&self) -> DMatrix<f64>;

    /// Basis, `q x k`.
    fn basis(&self) -> &DMatrix<f64>;

    fn col_names(&self) -> &[String];

    /// Scores for new rows of (standardized) `a` and `b`, using the fitted
    /// coefficients.
    fn project_scores(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    fn rank(&self) -> usize {
        self.basis().ncols()
    }

    fn reconstruct(&self) -> DMatrix<f64> {
        self.scores() * self.basis().transpose()
    }

    /// Transformed rows `project_scores(a, b) * basis'` for out-of-sample data.
    fn project(&self, a: &DataMatrix, b: &DataMatrix) -> Result<DataMatrix> {
        if a.ncols() != self.basis().nrows() || a.nrows() != b.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "factors expect {} columns, got A {}x{} and B {}x{}",
                self.basis().nrows(),
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let scores = self.project_scores(a.values(), b.values())?;
        DataMatrix::new(scores * self.basis().transpose(), a.col_names().to_vec())
    }
}

impl LowRankFactors for FactorPair {
    fn scores(&self) -> DMatrix<f64> {
        self.s.clone()
    }

    fn basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    fn col_names(&self) -> &[String] {
        &self.col_names
    }

    fn project_scores(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.ncols() != self.multipliers.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "fitted with {} sensitive columns, got {}",
                self.multipliers.ncols(),
                b.ncols()
            )));
        }
        Ok(a * &self.u - b * self.multipliers.transpose())
    }
}

/// Fails with [`Error::NotStandardized`] on the first column whose mean
/// exceeds `tol` in magnitude.
pub fn check_centered(m: &DataMatrix, tol: f64) -> Result<()> {
    let n = m.nrows() as f64;
    for (j, col) in m.values().column_iter().enumerate() {
        if (col.sum() / n).abs() > tol {
            return Err(Error::NotStandardized(m.col_names()[j].clone()));
        }
    }
    Ok(())
}

pub(crate) fn sensitive_solver(b: &DataMatrix) -> Result<LsSolver> {
    LsSolver::new(b.values()).map_err(|e| match e {
        Error::SingularDesign => Error::SingularSensitiveGram,
        other => other,
    })
}

fn check_inputs(a: &DataMatrix, b: &DataMatrix, k: usize, tol: f64) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let max = a.ncols().min(a.nrows());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    check_centered(a, tol)?;
    check_centered(b, tol)
}

/// Fits the OB factorization of standardized `a` against standardized `b`.
pub fn fit_ob(a: &DataMatrix, b: &DataMatrix, cfg: &ObConfig) -> Result<FactorPair> {
    check_inputs(a, b, cfg.k, cfg.center_check_tol)?;
    let gram = sensitive_solver(b)?;
    let av = a.values();

    let u = match cfg.basis {
        BasisRule::Residualized => truncated_svd_raw(&gram.residual(av), cfg.k)?.v,
        BasisRule::DataSvd => truncated_svd_raw(av, cfg.k)?.v,
    };
    let au = av * &u;
    let multipliers = gram.solve_many(&au).transpose();
    let s = gram.residual(&au);

    let recon_error = (av - &s * u.transpose()).norm();
    let svd_error = truncation_error(av, cfg.k)?;

    Ok(FactorPair {
        s,
        u,
        multipliers,
        recon_error,
        svd_error,
        col_names: a.col_names().to_vec(),
    })
}

/// `sqrt(sum_{j > k} d_j^2)`: the error of the best rank-`k` approximation.
pub fn truncation_error(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    let d = singular_values(m)?;
    // `+ 0.0` turns the empty sum's -0.0 into 0.0.
    Ok((d.iter().skip(k).map(|x| x * x).sum::<f64>() + 0.0).sqrt())
}

/// Processed matrix `S U'` carrying the column names of `a`.
pub fn transform<F: LowRankFactors + ?Sized>(a: &DataMatrix, fp: &F) -> Result<DataMatrix> {
    let scores = fp.scores();
    if a.nrows() != scores.nrows() || a.ncols() != fp.basis().nrows() {
        return Err(Error::ShapeMismatch(format!(
            "A is {}x{}, factors reconstruct {}x{}",
            a.nrows(),
            a.ncols(),
            scores.nrows(),
            fp.basis().nrows()
        )));
    }
    DataMatrix::new(scores * fp.basis().transpose(), a.col_names().to_vec())
}

/// Largest `|(A~' B)_{ij}|`.
pub fn orthogonality_residual(a_tilde: &DataMatrix, b: &DataMatrix) -> f64 {
    max_abs(&(a_tilde.values().transpose() * b.values()))
}

/// Both sides of the reconstruction-gap bound for a univariate `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaGap {
    /// `|| k P V_k D_k ||_F` with `P_ij = 1/n + b_i b_j / sum b^2` and
    /// `V_k D_k` the leading left singular vectors scaled by their values.
    pub lemma_value: f64,
    /// `recon_error(OB) - svd_error`, measured directly.
    pub direct_gap: f64,
}

/// Reports the printed gap formula next to the directly measured gap. No
/// agreement between the two is implied.
pub fn lemma_gap_diagnostic(a: &DataMatrix, b: &DataMatrix, k: usize) -> Result<LemmaGap> {
    if b.ncols() != 1 {
        return Err(Error::UnivariateOnly(b.ncols()));
    }
    let cfg = ObConfig::new(k);
    let fp = fit_ob(a, b, &cfg)?;

    let n = a.nrows() as f64;
    let svd = thin_svd(a.values())?;
    let mut vd = svd.u.columns(0, k).into_owned();
    for (j, mut col) in vd.column_iter_mut().enumerate() {
        col *= svd.d[j];
    }
    let bvec = b.values().column(0);
    let bb = bvec.norm_squared();
    // P * VD = (1/n) 1 (1' VD) + b (b' VD) / (b'b)
    let col_sums = vd.row_sum();
    let bt_vd = bvec.transpose() * &vd;
    let mut pvd = DMatrix::zeros(a.nrows(), k);
    for i in 0..a.nrows() {
        for j in 0..k {
            pvd[(i, j)] = col_sums[j] / n + bvec[i] * bt_vd[j] / bb;
        }
    }
    Ok(LemmaGap {
        lemma_value: k as f64 * pvd.norm(),
        direct_gap: fp.recon_error - fp.svd_error,
    })
}
