//! Seeded synthetic data from the loan and continuous-outcome structural
//! causal models, with exact counterfactual regeneration from the retained
//! exogenous draws.

pub mod cont_y;
pub mod loan;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cont_y::{gen_cont_y, ContYData, ContYParams, FlipMode};
pub use loan::{counterfactual_loan, gen_loan, LoanParams};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// More distinct sensitive rows than this is treated as continuous.
pub const MAX_GROUPS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// The generator behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", content = "params", rename_all = "kebab-case")]
pub enum Scm {
    Loan(LoanParams),
    ContY(ContYParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Non-sensitive features.
    pub a: DataMatrix,
    /// Sensitive columns as observed (categorical codes are not expanded).
    pub b: DataMatrix,
    /// Columns of `b` holding category codes.
    pub categorical: Vec<String>,
    pub y: Vec<f64>,
    pub outcome: OutcomeKind,
    /// Per-row exogenous draws; present only for generated data.
    pub noise: Option<DataMatrix>,
    pub scm: Option<Scm>,
}

/// Row labels `0..levels.len()` for the distinct sensitive rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupIndex {
    /// Distinct sensitive rows, sorted.
    pub levels: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl GroupIndex {
    pub fn from_matrix(b: &DataMatrix) -> Result<Self> {
        let mut seen: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
        for row in b.to_rows() {
            seen.entry(row.iter().map(|v| v.to_bits()).collect()).or_insert(row);
            if seen.len() > MAX_GROUPS {
                return Err(Error::RequiresGroups);
            }
        }
        let mut levels: Vec<Vec<f64>> = seen.into_values().collect();
        levels.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        if levels.len() < 2 {
            return Err(Error::RequiresGroups);
        }
        let labels = b
            .to_rows()
            .iter()
            .map(|r| levels.iter().position(|l| l == r).expect("level present"))
            .collect();
        Ok(Self { levels, labels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `n` rows all equal to level `g`, named like `b`.
    pub fn world(&self, g: usize, b: &DataMatrix) -> Result<DataMatrix> {
        let rows = vec![self.levels[g].clone(); b.nrows()];
        DataMatrix::from_rows(&rows, b.col_names().to_vec())
    }
}

impl Dataset {
    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Ok(Self {
            a: self.a.select_rows(rows)?,
            b: self.b.select_rows(rows)?,
            categorical: self.categorical.clone(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            outcome: self.outcome,
            noise: self.noise.as_ref().map(|m| m.select_rows(rows)).transpose()?,
            scm: self.scm.clone(),
        })
    }

    /// Seeded shuffle into a `fraction` / `1 - fraction` train/test pair.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let n = self.nrows();
        let n_train = (n as f64 * fraction).round() as usize;
        if !(fraction > 0.0 && fraction < 1.0) || n_train == 0 || n_train == n {
            return Err(Error::InvalidParams(format!(
                "split fraction {fraction} on {n} rows leaves an empty side"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok((
            self.select_rows(&order[..n_train])?,
            self.select_rows(&order[n_train..])?,
        ))
    }

    pub fn groups(&self) -> Result<GroupIndex> {
        GroupIndex::from_matrix(&self.b)
    }

    /// The same units with sensitive values `b_new`, pushed through the
    /// generating SCM with the retained exogenous draws.
    pub fn regenerate(&self, b_new: &DataMatrix) -> Result<Self> {
        if b_new.nrows() != self.nrows() || b_new.col_names() != self.b.col_names() {
            return Err(Error::ShapeMismatch(
                "counterfactual B must match the observed schema".into(),
            ));
        }
        let noise = self.noise.as_ref().ok_or(Error::MissingNoise)?;
        match &self.scm {
            Some(Scm::Loan(p)) => loan::regenerate(p, noise, b_new),
            Some(Scm::ContY(p)) => cont_y::regenerate(p, noise, &self.a, b_new),
            None => Err(Error::MissingNoise),
        }
    }
}

pub(crate) fn names(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("{prefix}{j}")).collect()
}
