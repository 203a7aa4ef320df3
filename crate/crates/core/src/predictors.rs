//! Downstream predictors: logistic and linear regression, plus the averaged
//! predictor that marginalizes a B-consuming model over the empirical
//! distribution of `B`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, LsSolver};

/// Weight norm past which a logistic fit is treated as diverging.
const DIVERGENCE_NORM: f64 = 1e6;
/// A fit whose probabilities are all this close to the labels is separated.
const PERFECT_FIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Logistic,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub kind: PredictorKind,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Features that carry sensitive information; empty for unaware models.
    #[serde(default)]
    pub sensitive_features: Vec<String>,
}

pub fn expit(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

impl Predictor {
    pub fn uses_sensitive(&self) -> bool {
        !self.sensitive_features.is_empty()
    }

    /// Marks `names` as sensitive; each must be one of the features.
    pub fn with_sensitive(mut self, names: &[String]) -> Result<Self> {
        for name in names {
            if !self.feature_names.contains(name) {
                return Err(Error::FeatureMismatch(format!("`{name}` is not a feature")));
            }
        }
        self.sensitive_features = names.to_vec();
        Ok(self)
    }

    fn link(&self, eta: f64) -> f64 {
        match self.kind {
            PredictorKind::Logistic => expit(eta),
            PredictorKind::Linear => eta,
        }
    }

    /// Weights reordered to match the columns of `x`.
    fn aligned_weights(&self, x: &DataMatrix) -> Result<DVector<f64>> {
        if x.ncols() != self.feature_names.len() {
            return Err(Error::FeatureMismatch(format!(
                "predictor has {} features, input has {} columns",
                self.feature_names.len(),
                x.ncols()
            )));
        }
        let mut w = DVector::zeros(x.ncols());
        for (name, weight) in self.feature_names.iter().zip(&self.weights) {
            let j = x
                .column_index(name)
                .ok_or_else(|| Error::FeatureMismatch(format!("missing column `{name}`")))?;
            w[j] = *weight;
        }
        Ok(w)
    }

    /// Linear predictor `X w + b` before the link.
    pub fn linear_part(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        let w = self.aligned_weights(x)?;
        Ok((x.values() * w).iter().map(|v| v + self.intercept).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Predictor = serde_json::from_str(s)?;
        if p.weights.len() != p.feature_names.len() || p.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parse("predictor weights do not match its features".into()));
        }
        Ok(p)
    }
}

/// Scores `x`: probabilities for logistic models, fitted values for linear.
pub fn predict_score(p: &Predictor, x: &DataMatrix) -> Result<Vec<f64>> {
    Ok(p.linear_part(x)?.into_iter().map(|eta| p.link(eta)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Ridge penalty on the weights (not the intercept).
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100,
            ridge: 0.0,
        }
    }
}

/// A logistic fit with its penalized negative log-likelihood after every
/// accepted step (the first entry is the starting point).
#[derive(Clone, Debug)]
pub struct LogisticFit {
    pub predictor: Predictor,
    pub losses: Vec<f64>,
    pub iters: usize,
    pub grad_norm: f64,
}

fn with_intercept(x: &DataMatrix) -> DMatrix<f64> {
    let v = x.values();
    let mut z = DMatrix::from_element(v.nrows(), v.ncols() + 1, 1.0);
    z.columns_mut(1, v.ncols()).copy_from(v);
    z
}

fn check_labels(x: &DataMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidParams("logistic labels must be 0 or 1".into()));
    }
    Ok(())
}

fn logistic_loss(z: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, ridge: f64) -> f64 {
    let eta = z * w;
    let nll: f64 = eta.iter().zip(y).map(|(e, yi)| softplus(*e) - yi * e).sum();
    nll + 0.5 * ridge * w.rows(1, w.len() - 1).norm_squared()
}

/// Maximum-likelihood logistic regression by damped IRLS with step halving.
///
/// Single-class labels, diverging weights and perfectly separated training
/// data all yield [`Error::SeparationDetected`] carrying the last iterate.
pub fn fit_logistic(x: &DataMatrix, y: &[f64], opts: &LogisticOptions) -> Result<LogisticFit> {
    check_labels(x, y)?;
    let z = with_intercept(x);
    let m = z.ncols();
    let mut w = DVector::<f64>::zeros(m);
    let mut loss = logistic_loss(&z, y, &w, opts.ridge);
    let mut losses = vec![loss];
    let mut grad_norm = f64::INFINITY;
    let mut iters = 0;
    let yv = DVector::from_column_slice(y);

    let single_class = y.iter().all(|v| *v == y[0]);
    while !single_class && iters < opts.max_iters {
        let mu = (&z * &w).map(expit);
        let mut grad = z.transpose() * (&yv - &mu);
        let mut penalty = DVector::from_element(m, opts.ridge);
        penalty[0] = 0.0;
        grad -= penalty.component_mul(&w);
        grad_norm = grad.norm();
        if grad_norm <= opts.tol {
            break;
        }
        iters += 1;
        let weights = mu.map(|p| p * (1.0 - p));
        let mut zw = z.clone();
        for (i, mut row) in zw.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let hess = z.transpose() * zw + DMatrix::from_diagonal(&penalty);
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(s) => s,
                None => break,
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &w + &step * t;
            let cand_loss = logistic_loss(&z, y, &cand, opts.ridge);
            if cand_loss <= loss {
                w = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        losses.push(loss);
        if w.norm() > DIVERGENCE_NORM {
            break;
        }
    }

    let predictor = Predictor {
        kind: PredictorKind::Logistic,
        feature_names: x.col_names().to_vec(),
        weights: w.rows(1, m - 1).iter().copied().collect(),
        intercept: w[0],
        sensitive_features: Vec::new(),
    };
    let perfect = (&z * &w)
        .iter()
        .zip(y)
        .all(|(e, yi)| (expit(*e) - yi).abs() < PERFECT_FIT);
    if single_class || w.norm() > DIVERGENCE_NORM || (opts.ridge == 0.0 && perfect) {
        return Err(Error::SeparationDetected {
            predictor: Box::new(predictor),
        });
    }
    Ok(LogisticFit {
        predictor,
        losses,
        iters,
        grad_norm,
    })
}

/// Ordinary least squares with an intercept.
pub fn fit_linear(x: &DataMatrix, y: &[f64]) -> Result<Predictor> {
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    let solver = LsSolver::new(&with_intercept(x))?;
    let coef = solver.solve(&DVector::from_column_slice(y));
    Ok(Predictor {
        kind: PredictorKind::Linear,
        feature_names: x.col_names().to_vec(),
        weights: coef.rows(1, coef.len() - 1).iter().copied().collect(),
        intercept: coef[0],
        sensitive_features: Vec::new(),
    })
}

/// Distinct rows of `B` with their empirical frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBDistribution {
    pub col_names: Vec<String>,
    pub support: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl EmpiricalBDistribution {
    pub fn from_matrix(b: &DataMatrix) -> Self {
        let mut counts: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for row in b.to_rows() {
            *counts.entry(row.iter().map(|v| v.to_bits()).collect()).or_default() += 1;
        }
        let n = b.nrows() as f64;
        let mut entries: Vec<(Vec<f64>, f64)> = counts
            .into_iter()
            .map(|(bits, c)| (bits.into_iter().map(f64::from_bits).collect(), c as f64 / n))
            .collect();
        entries.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite support"));
        let (support, probabilities) = entries.into_iter().unzip();
        Self {
            col_names: b.col_names().to_vec(),
            support,
            probabilities,
        }
    }

    pub fn point_mass(col_names: Vec<String>, value: Vec<f64>) -> Self {
        Self {
            col_names,
            support: vec![value],
            probabilities: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// `a -> sum_b f(a, b) P(b)`. For logistic models this mixes probabilities,
/// which differs from the expit of the averaged logit.
#[derive(Clone, Debug)]
pub struct AveragedPredictor {
    pub predictor: Predictor,
    pub distribution: EmpiricalBDistribution,
}

pub fn average_over_b(p: &Predictor, dist: &EmpiricalBDistribution) -> Result<AveragedPredictor> {
    if dist.is_empty() {
        return Err(Error::InvalidParams("empty B distribution".into()));
    }
    if p.sensitive_features != dist.col_names {
        return Err(Error::FeatureMismatch(format!(
            "predictor sensitive features {:?} differ from distribution columns {:?}",
            p.sensitive_features, dist.col_names
        )));
    }
    Ok(AveragedPredictor {
        predictor: p.clone(),
        distribution: dist.clone(),
    })
}

impl AveragedPredictor {
    /// Scores the non-sensitive features `a` (all predictor features except
    /// the sensitive ones, in any column order).
    pub fn score(&self, a: &DataMatrix) -> Result<Vec<f64>> {
        let p = &self.predictor;
        let mut base = vec![p.intercept; a.nrows()];
        let mut b_weights = vec![0.0; self.distribution.col_names.len()];
        let mut used = 0;
        for (name, w) in p.feature_names.iter().zip(&p.weights) {
            if let Some(s) = self.distribution.col_names.iter().position(|c| c == name) {
                b_weights[s] = *w;
                continue;
            }
            let j = a
                .column_index(name)
                .ok_or_else(|| Error::FeatureMismatch(format!("missing column `{name}`")))?;
            used += 1;
            for (i, v) in base.iter_mut().enumerate() {
                *v += w * a.get(i, j);
            }
        }
        if used != a.ncols() {
            return Err(Error::FeatureMismatch(format!(
                "expected {used} non-sensitive columns, got {}",
                a.ncols()
            )));
        }
        let mut out = vec![0.0; a.nrows()];
        for (b, prob) in self.distribution.support.iter().zip(&self.distribution.probabilities) {
            let shift: f64 = b.iter().zip(&b_weights).map(|(x, w)| x * w).sum();
            for (o, eta) in out.iter_mut().zip(&base) {
                *o += prob * p.link(eta + shift);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(prefix: &str, m: usize) -> Vec<String> {
        (0..m).map(|j| format!("{prefix}{j}")).collect()
    }

    fn matrix(cols: &[Vec<f64>], prefix: &str) -> DataMatrix {
        DataMatrix::from_columns(cols, names(prefix, cols.len())).unwrap()
    }

    #[test]
    fn expit_at_zero() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(800.0) <= 1.0 && expit(-800.0) >= 0.0);
    }

    #[test]
    fn single_class_labels_are_separation() {
        let x = matrix(&[vec![0.1, 0.5, -0.3, 0.9]], "x");
        let err = fit_logistic(&x, &[1.0; 4], &LogisticOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SeparationDetected { .. }));
    }

    #[test]
    fn perfectly_separable_data_is_flagged() {
        let x = matrix(&[vec![-2.0, -1.0, 1.0, 2.0]], "x");
        let err = fit_logistic(&x, &[0.0, 0.0, 1.0, 1.0], &LogisticOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SeparationDetected { .. }));
        let opts = LogisticOptions {
            ridge: 1.0,
            ..Default::default()
        };
        assert!(fit_logistic(&x, &[0.0, 0.0, 1.0, 1.0], &opts).is_ok());
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let xs = [0.5, 1.0, 2.0, -0.5, -1.0, -2.0, 0.3, -0.3];
        let ys = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let fit = fit_logistic(&matrix(&[xs.to_vec()], "x"), &ys, &LogisticOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.predictor.intercept, 0.0, epsilon = 1e-8);
        assert!(fit.grad_norm <= 1e-8);
    }

    #[test]
    fn recovers_generating_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = expit(0.3 + 1.5 * x1[i] - 0.5 * x2[i]);
                f64::from(rng.random::<f64>() < p)
            })
            .collect();
        let fit = fit_logistic(&matrix(&[x1, x2], "x"), &y, &LogisticOptions::default()).unwrap();
        let p = fit.predictor;
        assert!((p.weights[0] - 1.5).abs() <= 0.4, "{:?}", p.weights);
        assert!((p.weights[1] + 0.5).abs() <= 0.2, "{:?}", p.weights);
        assert!((p.intercept - 0.3).abs() <= 0.2, "{}", p.intercept);
        assert!(fit.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_exact_and_constant_targets() {
        let x = matrix(&[vec![1.0, 2.0, 3.0, 5.0]], "x");
        let p = fit_linear(&x, &[3.0, 6.0, 9.0, 15.0]).unwrap();
        assert_abs_diff_eq!(p.weights[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p.intercept, 0.0, epsilon = 1e-10);

        let p = fit_linear(&x, &[2.5; 4]).unwrap();
        assert_abs_diff_eq!(p.weights[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p.intercept, 2.5, epsilon = 1e-10);
    }

    #[test]
    fn linear_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x1[i] - x2[i] + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p = fit_linear(&matrix(&[x1.clone(), x2.clone()], "x"), &y).unwrap();

        let z = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => x1[i],
            _ => x2[i],
        });
        let oracle = (z.transpose() * &z)
            .lu()
            .solve(&(z.transpose() * DVector::from_column_slice(&y)))
            .unwrap();
        assert_abs_diff_eq!(p.intercept, oracle[0], epsilon = 1e-8);
        assert_abs_diff_eq!(p.weights[0], oracle[1], epsilon = 1e-8);
        assert_abs_diff_eq!(p.weights[1], oracle[2], epsilon = 1e-8);
    }

    #[test]
    fn prediction_by_hand() {
        let p = Predictor {
            kind: PredictorKind::Linear,
            feature_names: names("x", 2),
            weights: vec![2.0, -1.0],
            intercept: 0.5,
            sensitive_features: vec![],
        };
        let x = DataMatrix::from_rows(&[vec![1.0, 3.0], vec![-2.0, 0.5]], names("x", 2)).unwrap();
        assert_eq!(predict_score(&p, &x).unwrap(), vec![-0.5, -4.0]);

        // Columns are matched by name, not position.
        let swapped = DataMatrix::from_rows(&[vec![3.0, 1.0]], vec!["x1".into(), "x0".into()]).unwrap();
        assert_eq!(predict_score(&p, &swapped).unwrap(), vec![-0.5]);

        let zero = Predictor {
            weights: vec![0.0, 0.0],
            ..p.clone()
        };
        assert_eq!(predict_score(&zero, &x).unwrap(), vec![0.5, 0.5]);

        let wrong = DataMatrix::from_rows(&[vec![1.0, 3.0]], names("z", 2)).unwrap();
        assert!(matches!(predict_score(&p, &wrong), Err(Error::FeatureMismatch(_))));
    }

    #[test]
    fn json_roundtrip() {
        let p = Predictor {
            kind: PredictorKind::Logistic,
            feature_names: names("x", 2),
            weights: vec![0.25, -1.0],
            intercept: 0.1,
            sensitive_features: vec!["x1".into()],
        };
        assert_eq!(Predictor::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    fn ab_predictor(kind: PredictorKind) -> Predictor {
        Predictor {
            kind,
            feature_names: vec!["a".into(), "b".into()],
            weights: vec![1.0, 2.0],
            intercept: -0.5,
            sensitive_features: vec!["b".into()],
        }
    }

    #[test]
    fn averaging_over_point_mass_is_substitution() {
        let p = ab_predictor(PredictorKind::Logistic);
        let dist = EmpiricalBDistribution::point_mass(vec!["b".into()], vec![0.7]);
        let avg = average_over_b(&p, &dist).unwrap();
        let a = matrix(&[vec![0.0, 1.0, -3.0]], "a").renamed(vec!["a".into()]).unwrap();
        let direct: Vec<f64> = [0.0, 1.0, -3.0].iter().map(|x| expit(-0.5 + x + 1.4)).collect();
        for (s, d) in avg.score(&a).unwrap().iter().zip(direct) {
            assert_abs_diff_eq!(*s, d, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_average_over_symmetric_support_drops_b() {
        let p = ab_predictor(PredictorKind::Linear);
        let b = DataMatrix::from_columns(&[vec![1.0, -1.0, 1.0, -1.0]], vec!["b".into()]).unwrap();
        let dist = EmpiricalBDistribution::from_matrix(&b);
        assert_eq!(dist.support, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(dist.probabilities, vec![0.5, 0.5]);
        let a = DataMatrix::from_columns(&[vec![2.0, -1.0]], vec!["a".into()]).unwrap();
        assert_eq!(average_over_b(&p, &dist).unwrap().score(&a).unwrap(), vec![1.5, -1.5]);
    }

    #[test]
    fn logistic_average_mixes_probabilities() {
        let p = ab_predictor(PredictorKind::Logistic);
        let b = DataMatrix::from_columns(&[vec![0.0, 1.0]], vec!["b".into()]).unwrap();
        let avg = average_over_b(&p, &EmpiricalBDistribution::from_matrix(&b)).unwrap();
        let a = DataMatrix::from_columns(&[vec![0.0]], vec!["a".into()]).unwrap();
        let got = avg.score(&a).unwrap()[0];
        // 0.5 expit(-0.5) + 0.5 expit(1.5) = 0.5 (0.377541 + 0.817574)
        assert_abs_diff_eq!(got, 0.597_557_7, epsilon = 1e-6);
        assert!((got - expit(0.5)).abs() > 0.02);
    }

    #[test]
    fn averaging_requires_matching_sensitive_columns() {
        let p = ab_predictor(PredictorKind::Linear);
        let dist = EmpiricalBDistribution::point_mass(vec!["c".into()], vec![0.0]);
        assert!(matches!(average_over_b(&p, &dist), Err(Error::FeatureMismatch(_))));
    }
}
