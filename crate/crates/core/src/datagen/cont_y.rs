//! High-dimensional continuous-outcome SCM. Binary sensitive columns drive
//! every `A_j` through their sum at scale `j`; `X` columns are independent
//! of `B`; `Y` adds up all features plus noise.

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{names, Dataset, OutcomeKind, Scm};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// How counterfactual sensitive values are assigned in the test split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlipMode {
    /// A uniformly chosen `cf_fraction` of rows get every `B_i` flipped.
    #[default]
    PerRow,
    /// Each `(row, B_i)` cell is flipped independently with probability
    /// `cf_fraction`.
    PerCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContYParams {
    pub n: usize,
    pub p_b: usize,
    pub p_a: usize,
    pub p_x: usize,
    pub noise_sd_y: f64,
    /// Standard deviation of the per-feature noise inside each `A_j`.
    pub noise_sd_a: f64,
    pub bernoulli_p: f64,
    pub cf_fraction: f64,
    pub split_fraction: f64,
    pub flip_mode: FlipMode,
    pub seed: u64,
}

impl Default for ContYParams {
    fn default() -> Self {
        Self {
            n: 10_000,
            p_b: 3,
            p_a: 40,
            p_x: 8,
            noise_sd_y: 0.5,
            noise_sd_a: 0.5,
            bernoulli_p: 0.7,
            cf_fraction: 0.8,
            split_fraction: 0.75,
            flip_mode: FlipMode::PerRow,
            seed: 0,
        }
    }
}

impl ContYParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParams(m));
        if self.p_b == 0 || self.p_a == 0 || self.p_x == 0 {
            return fail("p_b, p_a and p_x must be positive".into());
        }
        for (name, v) in [
            ("bernoulli_p", self.bernoulli_p),
            ("cf_fraction", self.cf_fraction),
            ("split_fraction", self.split_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(self.noise_sd_y >= 0.0 && self.noise_sd_a >= 0.0) {
            return fail("noise standard deviations must be nonnegative".into());
        }
        let n_train = self.n_train();
        if n_train < 2 || self.n - n_train < 1 {
            return fail(format!("n = {} leaves an empty split", self.n));
        }
        Ok(())
    }

    fn n_train(&self) -> usize {
        (self.n as f64 * self.split_fraction).round() as usize
    }

    /// Standard deviation of each `X` column: `sqrt(p_a p_b 0.05)`.
    pub fn x_sd(&self) -> f64 {
        (self.p_a as f64 * self.p_b as f64 * 0.05).sqrt()
    }

    fn noise_names(&self) -> Vec<String> {
        let mut n = names("eps_A", self.p_a);
        n.push("eps_Y".into());
        n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContYData {
    pub train: Dataset,
    pub test: Dataset,
    /// `test` with flipped sensitive values and regenerated `A` and `Y`.
    pub counterfactual_test: Dataset,
    /// Rows of `test` that received any flipped value.
    pub flipped_mask: Vec<bool>,
}

/// `A` (the `p_a` scaled columns followed by the `X` columns) and `Y`.
fn structural(p: &ContYParams, b: &DataMatrix, x: &DMatrix<f64>, noise: &DataMatrix) -> Result<(DataMatrix, Vec<f64>)> {
    let n = b.nrows();
    let mut a = DMatrix::zeros(n, p.p_a + p.p_x);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let bsum: f64 = b.row(r).iter().sum();
        let mut total = 0.0;
        for j in 0..p.p_a {
            let v = (bsum + noise.get(r, j)) * (j + 1) as f64;
            a[(r, j)] = v;
            total += v;
        }
        for j in 0..p.p_x {
            a[(r, p.p_a + j)] = x[(r, j)];
            total += x[(r, j)];
        }
        y.push(total + noise.get(r, p.p_a));
    }
    let mut cols = names("A", p.p_a);
    cols.extend(names("X", p.p_x));
    Ok((DataMatrix::new(a, cols)?, y))
}

fn assemble(p: &ContYParams, b: DataMatrix, x: &DMatrix<f64>, noise: DataMatrix) -> Result<Dataset> {
    let (a, y) = structural(p, &b, x, &noise)?;
    Ok(Dataset {
        a,
        b,
        categorical: Vec::new(),
        y,
        outcome: OutcomeKind::Continuous,
        noise: Some(noise),
        scm: Some(Scm::ContY(p.clone())),
    })
}

pub(super) fn regenerate(p: &ContYParams, noise: &DataMatrix, a: &DataMatrix, b_new: &DataMatrix) -> Result<Dataset> {
    if b_new.ncols() != p.p_b || a.ncols() != p.p_a + p.p_x {
        return Err(Error::ShapeMismatch("dataset does not match its generator".into()));
    }
    let x = a.values().columns(p.p_a, p.p_x).into_owned();
    assemble(p, b_new.clone(), &x, noise.clone())
}

pub fn gen_cont_y(p: &ContYParams) -> Result<ContYData> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.n;
    let mut b = DMatrix::zeros(n, p.p_b);
    let mut x = DMatrix::zeros(n, p.p_x);
    let mut noise = DMatrix::zeros(n, p.p_a + 1);
    let x_sd = p.x_sd();
    for r in 0..n {
        for i in 0..p.p_b {
            b[(r, i)] = f64::from(rng.random::<f64>() < p.bernoulli_p);
        }
        for j in 0..p.p_a {
            noise[(r, j)] = p.noise_sd_a * rng.sample::<f64, _>(StandardNormal);
        }
        for j in 0..p.p_x {
            x[(r, j)] = x_sd * rng.sample::<f64, _>(StandardNormal);
        }
        noise[(r, p.p_a)] = p.noise_sd_y * rng.sample::<f64, _>(StandardNormal);
    }
    let full = assemble(
        p,
        DataMatrix::new(b, names("B", p.p_b))?,
        &x,
        DataMatrix::new(noise, p.noise_names())?,
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = p.n_train();
    let train = full.select_rows(&order[..n_train])?;
    let test = full.select_rows(&order[n_train..])?;

    let n_test = test.nrows();
    let mut flips = DMatrix::from_element(n_test, p.p_b, false);
    match p.flip_mode {
        FlipMode::PerRow => {
            let count = (n_test as f64 * p.cf_fraction).round() as usize;
            for r in index::sample(&mut rng, n_test, count) {
                flips.row_mut(r).fill(true);
            }
        }
        FlipMode::PerCell => {
            for f in flips.iter_mut() {
                *f = rng.random::<f64>() < p.cf_fraction;
            }
        }
    }
    let b_cf = test.b.with_values(DMatrix::from_fn(n_test, p.p_b, |r, i| {
        let v = test.b.get(r, i);
        if flips[(r, i)] {
            1.0 - v
        } else {
            v
        }
    }))?;
    let counterfactual_test = test.regenerate(&b_cf)?;
    let flipped_mask = (0..n_test).map(|r| flips.row(r).iter().any(|f| *f)).collect();

    Ok(ContYData {
        train,
        test,
        counterfactual_test,
        flipped_mask,
    })
}
