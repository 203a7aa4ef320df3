//! Loan approval SCM: race group `B` shifts education `E` and income `I`,
//! and the approval decision `Y` depends on all three.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, OutcomeKind, Scm};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::predictors::expit;

/// Group cut points on `U_B`: `B = 1{U_B > 0.76} + 1{U_B > 0.92}`.
pub const GROUP_CUTS: [f64; 2] = [0.76, 0.92];
pub const NOISE_COLUMNS: [&str; 4] = ["U_B", "Z_E", "Z_I", "U_Y"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoanParams {
    pub lambda_e0: f64,
    pub lambda_e1: f64,
    pub lambda_e2: f64,
    #[serde(alias = "lambda_i0")]
    pub lambda_a0: f64,
    #[serde(alias = "lambda_i1")]
    pub lambda_a1: f64,
    #[serde(alias = "lambda_i2")]
    pub lambda_a2: f64,
    pub beta_0: f64,
    pub beta_1: f64,
    pub beta_2: f64,
    pub beta_e: f64,
    pub beta_i: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for LoanParams {
    fn default() -> Self {
        Self {
            lambda_e0: 3.0,
            lambda_e1: -0.5,
            lambda_e2: -1.0,
            lambda_a0: 1.0,
            lambda_a1: 0.0,
            lambda_a2: 0.0,
            beta_0: 0.0,
            beta_1: -2.0,
            beta_2: -2.5,
            beta_e: 0.3,
            beta_i: 0.1,
            n: 5000,
            seed: 0,
        }
    }
}

impl LoanParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        for g in 0..3 {
            if !(self.income_scale(g) > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "income scale for group {g} must be positive, got {}",
                    self.income_scale(g)
                )));
            }
        }
        Ok(())
    }

    fn income_scale(&self, g: usize) -> f64 {
        self.lambda_a0 + [0.0, self.lambda_a1, self.lambda_a2][g]
    }

    fn education_mean(&self, g: usize) -> f64 {
        self.lambda_e0 + [0.0, self.lambda_e1, self.lambda_e2][g]
    }

    /// `(E, I, Y)` for group `g` and exogenous draws `(z_e, z_i, u_y)`.
    pub fn structural(&self, g: usize, z_e: f64, z_i: f64, u_y: f64) -> (f64, f64, f64) {
        let u_e = self.education_mean(g) + z_e;
        let e = u_e.max(0.0);
        let i = (0.1 * u_e + self.income_scale(g).ln() + z_i).exp();
        let direct = [0.0, self.beta_1, self.beta_2][g];
        let p = expit(self.beta_0 + direct + self.beta_e * e + self.beta_i * i);
        (e, i, f64::from(u_y < p))
    }
}

pub fn group_of(u_b: f64) -> usize {
    GROUP_CUTS.iter().filter(|&&c| u_b > c).count()
}

fn assemble(p: &LoanParams, groups: &[usize], noise: DataMatrix) -> Result<Dataset> {
    let n = groups.len();
    let mut a = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for (r, &g) in groups.iter().enumerate() {
        let (e, i, yy) = p.structural(g, noise.get(r, 1), noise.get(r, 2), noise.get(r, 3));
        a[(r, 0)] = e;
        a[(r, 1)] = i;
        y.push(yy);
    }
    let b = DMatrix::from_iterator(n, 1, groups.iter().map(|&g| g as f64));
    Ok(Dataset {
        a: DataMatrix::new(a, vec!["E".into(), "I".into()])?,
        b: DataMatrix::new(b, vec!["B".into()])?,
        categorical: vec!["B".into()],
        y,
        outcome: OutcomeKind::Binary,
        noise: Some(noise),
        scm: Some(Scm::Loan(p.clone())),
    })
}

pub fn gen_loan(p: &LoanParams) -> Result<Dataset> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut noise = DMatrix::zeros(p.n, NOISE_COLUMNS.len());
    for r in 0..p.n {
        noise[(r, 0)] = rng.random::<f64>();
        noise[(r, 1)] = rng.sample(StandardNormal);
        noise[(r, 2)] = rng.sample(StandardNormal);
        noise[(r, 3)] = rng.random::<f64>();
    }
    let groups: Vec<usize> = noise.column(0).iter().map(|&u| group_of(u)).collect();
    let noise = DataMatrix::new(noise, NOISE_COLUMNS.iter().map(|s| s.to_string()).collect())?;
    assemble(p, &groups, noise)
}

pub(super) fn regenerate(p: &LoanParams, noise: &DataMatrix, b_new: &DataMatrix) -> Result<Dataset> {
    if b_new.ncols() != 1 {
        return Err(Error::ShapeMismatch("loan data has a single sensitive column".into()));
    }
    let groups = b_new
        .column(0)
        .iter()
        .map(|&v| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            2.0 => Ok(2),
            other => Err(Error::InvalidParams(format!(
                "loan group must be 0, 1 or 2, got {other}"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(p, &groups, noise.clone())
}

/// Every row moved to `target_group`, with `E`, `I` and `Y` regenerated.
pub fn counterfactual_loan(ds: &Dataset, target_group: usize) -> Result<Dataset> {
    let b = DataMatrix::new(
        DMatrix::from_element(ds.nrows(), 1, target_group as f64),
        ds.b.col_names().to_vec(),
    )?;
    ds.regenerate(&b)
}
