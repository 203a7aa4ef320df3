//! Sparse orthogonal-to-bias (SOB) factorization.
//!
//! Rank-one components are extracted one at a time by alternating a score
//! update (deflate against earlier scores, residualize on `B`, normalize)
//! with a basis update (soft-threshold `A's`, normalize). The threshold is
//! chosen every iteration so that each basis vector stays inside the
//! `l1` budget `h`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{soft_threshold, DataMatrix};
use crate::ob::{check_centered, sensitive_solver, LowRankFactors};

const DEGENERATE_NORM: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;
/// A bracket end this close to the budget is taken as the solution.
const BUDGET_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobConfig {
    pub k: usize,
    /// `l1` budget for each basis vector; at least 1.
    pub h: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(default = "default_center_tol")]
    pub center_check_tol: f64,
}

fn default_center_tol() -> f64 {
    1e-8
}

impl SobConfig {
    pub fn new(k: usize, h: f64) -> Self {
        Self {
            k,
            h,
            eta: 1e-6,
            max_iters: 500,
            seed: 0,
            center_check_tol: default_center_tol(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, n: usize, q: usize) -> Result<()> {
        let max = n.min(q);
        if self.k == 0 || self.k > max {
            return Err(Error::RankOutOfRange { k: self.k, max });
        }
        if !(self.h >= 1.0) {
            return Err(Error::InvalidParams(format!("h must be >= 1, got {}", self.h)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParams(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SobResult {
    /// `[d_1 s_1, ..., d_k s_k]`, `n x k`.
    pub s_hat: DMatrix<f64>,
    /// Unit score vectors `s_i`, `n x k`.
    pub s_unit: DMatrix<f64>,
    /// Sparse unit basis vectors, `q x k`.
    pub u_hat: DMatrix<f64>,
    /// `d_i = s_i' A u_i`.
    pub d: Vec<f64>,
    pub iters: Vec<usize>,
    pub converged: Vec<bool>,
    /// Per component, `||R - d_t s_t u_t'||_F` after every iteration, where
    /// `R` is `A` minus the earlier components.
    pub objective_trace: Vec<Vec<f64>>,
    pub col_names: Vec<String>,
    // Coefficients that reproduce `s_unit` row by row.
    score_basis: DMatrix<f64>,
    betas: DMatrix<f64>,
    deflation: DMatrix<f64>,
    norms: Vec<f64>,
}

impl SobResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// [`Error::NoConvergence`] for the first component that hit `max_iters`.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.converged.iter().position(|&c| !c) {
            Some(i) => Err(Error::NoConvergence {
                component: i,
                iters: self.iters[i],
            }),
            None => Ok(()),
        }
    }

    /// `P_i x = x - sum_{l <= i} s_l s_l' x` for `i` in `0..k`.
    pub fn deflate(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        let s = self.s_unit.columns(0, i + 1);
        x - s * (s.transpose() * x)
    }

    /// Number of nonzero entries in each basis vector.
    pub fn support_sizes(&self) -> Vec<usize> {
        self.u_hat
            .column_iter()
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .collect()
    }
}

impl LowRankFactors for SobResult {
    fn scores(&self) -> DMatrix<f64> {
        self.s_hat.clone()
    }

    fn basis(&self) -> &DMatrix<f64> {
        &self.u_hat
    }

    fn col_names(&self) -> &[String] {
        &self.col_names
    }

    fn project_scores(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.ncols() != self.betas.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "fitted with {} sensitive columns, got {}",
                self.betas.nrows(),
                b.ncols()
            )));
        }
        let k = self.d.len();
        let mut z = DMatrix::zeros(a.nrows(), k);
        for i in 0..k {
            let mut col = a * self.score_basis.column(i) - b * self.betas.column(i);
            for l in 0..i {
                col.axpy(-self.deflation[(l, i)], &z.column(l), 1.0);
            }
            z.set_column(i, &(col / self.norms[i]));
        }
        for (i, mut col) in z.column_iter_mut().enumerate() {
            col *= self.d[i];
        }
        Ok(z)
    }
}

fn l1_ratio(v: &[f64]) -> f64 {
    let l2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if l2 == 0.0 {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / l2
}

/// Threshold `theta >= 0` such that `normalize(S_theta(v))` has `l1` norm
/// `h` (or `theta = 0` when the unthresholded direction already fits).
///
/// When the largest magnitude is shared by `m` entries and `h < sqrt(m)`
/// the budget cannot be met; the sparsest reachable direction is returned
/// via the largest magnitude below the maximum.
pub fn select_theta(v: &[f64], h: f64) -> f64 {
    debug_assert!(h >= 1.0);
    if l1_ratio(v) <= h {
        return 0.0;
    }
    let top = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let ties = v.iter().filter(|x| x.abs() == top).count();
    if (ties as f64).sqrt() > h {
        return v.iter().map(|x| x.abs()).filter(|x| *x < top).fold(0.0, f64::max);
    }
    // The ratio is nonincreasing in theta. Locate the pair of consecutive
    // magnitudes bracketing the solution first, so that every entry below
    // the bracket is zeroed exactly rather than left at rounding level.
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.dedup();
    mags.push(0.0);
    let mut j = 0;
    while j + 1 < mags.len() && l1_ratio(&soft_threshold(v, mags[j + 1])) <= h {
        j += 1;
    }
    let (mut lo, mut hi) = (mags[j + 1], mags[j]);
    if l1_ratio(&soft_threshold(v, lo)) <= h {
        return lo;
    }
    if l1_ratio(&soft_threshold(v, hi)) >= h - BUDGET_SLACK {
        return hi;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if l1_ratio(&soft_threshold(v, mid)) > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn normalized_threshold(w: &DVector<f64>, h: f64) -> Option<DVector<f64>> {
    let theta = select_theta(w.as_slice(), h);
    let mut u = DVector::from_vec(soft_threshold(w.as_slice(), theta));
    // Entries at rounding level relative to the largest are zero in exact
    // arithmetic (e.g. loadings on columns already explained by earlier
    // components); keep them out of the support.
    let floor = f64::EPSILON * u.amax() * (u.len() as f64);
    u.apply(|x| {
        if x.abs() <= floor {
            *x = 0.0
        }
    });
    let norm = u.norm();
    (norm > 0.0).then(|| u / norm)
}

/// Fits `k` sparse components of standardized `a`, orthogonal to `b`.
///
/// Components that reach `max_iters` are kept and flagged in
/// [`SobResult::converged`].
pub fn fit_sob(a: &DataMatrix, b: &DataMatrix, cfg: &SobConfig) -> Result<SobResult> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (n, q) = (a.nrows(), a.ncols());
    cfg.validate(n, q)?;
    check_centered(a, cfg.center_check_tol)?;
    check_centered(b, cfg.center_check_tol)?;
    let gram = sensitive_solver(b)?;
    let av = a.values();
    let at = av.transpose();
    let k = cfg.k;
    let p = b.ncols();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s_unit = DMatrix::<f64>::zeros(n, k);
    let mut u_hat = DMatrix::<f64>::zeros(q, k);
    let mut score_basis = DMatrix::<f64>::zeros(q, k);
    let mut betas = DMatrix::<f64>::zeros(p, k);
    let mut deflation = DMatrix::<f64>::zeros(k, k);
    let mut norms = vec![0.0; k];
    let mut d = vec![0.0; k];
    let mut iters = vec![0; k];
    let mut converged = vec![false; k];
    let mut objective_trace = Vec::with_capacity(k);
    let mut residual_sq = av.norm_squared();

    for i in 0..k {
        let mut u = DVector::<f64>::from_fn(q, |_, _| rng.sample(StandardNormal));
        u /= u.norm();
        let mut s_prev = DVector::<f64>::zeros(n);
        let mut trace = Vec::new();
        let mut last = None;

        for t in 1..=cfg.max_iters {
            iters[i] = t;
            let au = av * &u;
            let earlier = s_unit.columns(0, i);
            let gam = earlier.transpose() * &au;
            let v = &au - earlier * &gam;
            let vm = DMatrix::from_column_slice(n, 1, v.as_slice());
            let beta = gram.solve_many(&vm).column(0).into_owned();
            let mut r = gram.residual(&vm).column(0).into_owned();
            r -= earlier * (earlier.transpose() * &r);
            let norm = r.norm();
            if norm <= DEGENERATE_NORM {
                return Err(Error::DegenerateComponent(i));
            }
            let s = r / norm;

            let u_new = normalized_threshold(&(&at * &s), cfg.h).ok_or(Error::DegenerateComponent(i))?;
            let dt = s.dot(&(av * &u_new));
            trace.push((residual_sq - dt * dt).max(0.0).sqrt());

            let du = (&u_new - &u).norm();
            let ds = (&s - &s_prev).norm();
            last = Some((u.clone(), beta, gam, norm));
            u = u_new;
            s_prev = s;
            if du <= cfg.eta && ds <= cfg.eta {
                converged[i] = true;
                break;
            }
        }

        let (u_scores, beta, gam, norm) = last.expect("at least one iteration");
        // Final projection onto the l1 ball for the settled score vector.
        let u_final = normalized_threshold(&(&at * &s_prev), cfg.h).ok_or(Error::DegenerateComponent(i))?;
        d[i] = s_prev.dot(&(av * &u_final));
        residual_sq = (residual_sq - d[i] * d[i]).max(0.0);

        s_unit.set_column(i, &s_prev);
        u_hat.set_column(i, &u_final);
        score_basis.set_column(i, &u_scores);
        betas.set_column(i, &beta);
        for l in 0..i {
            deflation[(l, i)] = gam[l];
        }
        norms[i] = norm;
        objective_trace.push(trace);
    }

    let mut s_hat = s_unit.clone();
    for (i, mut col) in s_hat.column_iter_mut().enumerate() {
        col *= d[i];
    }

    Ok(SobResult {
        s_hat,
        s_unit,
        u_hat,
        d,
        iters,
        converged,
        objective_trace,
        col_names: a.col_names().to_vec(),
        score_basis,
        betas,
        deflation,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{max_abs, standardize};
    use crate::ob::{fit_ob, transform, ObConfig};
    use approx::assert_abs_diff_eq;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn instance(n: usize, q: usize, p: usize, seed: u64) -> (DataMatrix, DataMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = gaussian(n, p, &mut rng);
        let a = gaussian(n, q, &mut rng) + &b * gaussian(p, q, &mut rng) * 0.7;
        let a = standardize(&DataMatrix::with_prefix(a, "a").unwrap()).unwrap().0;
        let b = standardize(&DataMatrix::with_prefix(b, "b").unwrap()).unwrap().0;
        (a, b)
    }

    #[test]
    fn select_theta_one_sparse_input() {
        for h in [1.0, 1.5, 3.0] {
            assert_eq!(select_theta(&[1.0, 0.0, 0.0], h), 0.0);
        }
    }

    #[test]
    fn select_theta_boundary_needs_no_threshold() {
        assert_eq!(select_theta(&[1.0, 1.0], 2f64.sqrt()), 0.0);
    }

    #[test]
    fn select_theta_plug_back() {
        let v = [1.0, 0.5];
        let theta = select_theta(&v, 1.2);
        assert!(theta > 0.0);
        assert_abs_diff_eq!(l1_ratio(&soft_threshold(&v, theta)), 1.2, epsilon = 1e-8);

        let v = [3.0, -2.0, 0.5, 1.0, -0.1];
        let theta = select_theta(&v, 1.5);
        assert_abs_diff_eq!(l1_ratio(&soft_threshold(&v, theta)), 1.5, epsilon = 1e-8);
    }

    #[test]
    fn select_theta_tied_maximum_is_unreachable() {
        // Every threshold below 1 keeps the direction (1, 1)/sqrt(2).
        let theta = select_theta(&[1.0, 1.0], 1.2);
        assert_eq!(theta, 0.0);
        let theta = select_theta(&[1.0, -1.0, 0.25], 1.2);
        assert_eq!(theta, 0.25);
        assert_abs_diff_eq!(
            l1_ratio(&soft_threshold(&[1.0, -1.0, 0.25], theta)),
            2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn constraints_hold_on_converged_components() {
        let (a, b) = instance(60, 6, 2, 1);
        let res = fit_sob(&a, &b, &SobConfig::new(3, 1.8).with_seed(4)).unwrap();
        assert!(res.all_converged());
        for i in 0..3 {
            let s = res.s_unit.column(i);
            let u = res.u_hat.column(i);
            assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(u.norm(), 1.0, epsilon = 1e-6);
            assert!(u.iter().map(|x| x.abs()).sum::<f64>() <= 1.8 + 1e-6);
            assert!((s.transpose() * b.values()).amax() <= 1e-6);
            for l in 0..i {
                assert!(s.dot(&res.s_unit.column(l)).abs() <= 1e-6);
            }
        }
        let at = transform(&a, &res).unwrap();
        assert!(max_abs(&(at.values().transpose() * b.values())) <= 1e-6);
    }

    #[test]
    fn unit_budget_gives_one_sparse_bases() {
        let (a, b) = instance(50, 5, 1, 2);
        let res = fit_sob(&a, &b, &SobConfig::new(3, 1.0).with_seed(9)).unwrap();
        assert_eq!(res.support_sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn slack_budget_matches_ob() {
        let (a, b) = instance(50, 5, 1, 3);
        let ob = fit_ob(&a, &b, &ObConfig::new(5)).unwrap();
        let res = fit_sob(&a, &b, &SobConfig::new(5, 5f64.sqrt()).with_seed(3)).unwrap();
        let err = (a.values() - res.reconstruct()).norm();
        assert!(
            (err - ob.recon_error).abs() <= 0.05 * ob.recon_error,
            "{err} vs {}",
            ob.recon_error
        );
    }

    #[test]
    fn objective_is_monotone_within_components() {
        let (a, b) = instance(80, 8, 2, 5);
        let res = fit_sob(&a, &b, &SobConfig::new(4, 2.0).with_seed(1)).unwrap();
        for trace in &res.objective_trace {
            assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{trace:?}");
        }
    }

    #[test]
    fn deflation_matches_explicit_projector() {
        let (a, b) = instance(40, 5, 1, 6);
        let res = fit_sob(&a, &b, &SobConfig::new(3, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let au = a.values() * &u;
        for i in 0..3 {
            let mut p = DMatrix::<f64>::identity(40, 40);
            for l in 0..=i {
                let s = res.s_unit.column(l);
                p -= s * s.transpose();
            }
            assert!((res.deflate(&au, i) - &p * &au).amax() <= 1e-10);
        }
    }

    #[test]
    fn projection_reproduces_training_scores() {
        let (a, b) = instance(45, 6, 2, 7);
        let res = fit_sob(&a, &b, &SobConfig::new(3, 1.5).with_seed(2)).unwrap();
        let scores = res.project_scores(a.values(), b.values()).unwrap();
        assert!((scores - &res.s_hat).amax() <= 1e-10);
    }

    #[test]
    fn seeded_runs_are_deterministic() {
        let (a, b) = instance(30, 4, 1, 8);
        let cfg = SobConfig::new(2, 1.5).with_seed(77);
        let r1 = fit_sob(&a, &b, &cfg).unwrap();
        let r2 = fit_sob(&a, &b, &cfg).unwrap();
        assert_eq!(r1.u_hat, r2.u_hat);
        assert_eq!(r1.s_hat, r2.s_hat);
    }

    #[test]
    fn iteration_cap_is_flagged_not_fatal() {
        let (a, b) = instance(30, 4, 1, 10);
        let mut cfg = SobConfig::new(2, 1.5);
        cfg.max_iters = 1;
        let res = fit_sob(&a, &b, &cfg).unwrap();
        assert!(!res.all_converged());
        assert!(matches!(
            res.ensure_converged(),
            Err(Error::NoConvergence { component: 0, iters: 1 })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (a, b) = instance(20, 3, 1, 11);
        assert!(matches!(
            fit_sob(&a, &b, &SobConfig::new(2, 0.5)),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(
            fit_sob(&a, &b, &SobConfig::new(4, 2.0)),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn degenerate_component_is_reported() {
        // Column of A identical to B: after residualizing, the only direction left is zero.
        let (_, b) = instance(20, 1, 1, 12);
        let a = b.renamed(vec!["a0".into()]).unwrap();
        assert!(matches!(
            fit_sob(&a, &b, &SobConfig::new(1, 1.0)),
            Err(Error::DegenerateComponent(0))
        ));
    }
}
