//! Numeric design for sensitive columns: category codes become indicator
//! columns with the lowest level dropped as reference.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Numeric {
        name: String,
    },
    /// `levels[0]` is the reference and gets no indicator.
    Categorical {
        name: String,
        levels: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveEncoding {
    pub columns: Vec<ColumnEncoding>,
}

fn level_name(name: &str, level: f64) -> String {
    format!("{name}={level}")
}

impl SensitiveEncoding {
    /// Learns the levels of each column named in `categorical` from `b`.
    pub fn fit(b: &DataMatrix, categorical: &[String]) -> Result<Self> {
        for c in categorical {
            if b.column_index(c).is_none() {
                return Err(Error::FeatureMismatch(format!(
                    "categorical column `{c}` is not sensitive"
                )));
            }
        }
        let columns = b
            .col_names()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                if categorical.contains(name) {
                    let mut levels = b.column(j);
                    levels.sort_by(f64::total_cmp);
                    levels.dedup();
                    ColumnEncoding::Categorical {
                        name: name.clone(),
                        levels,
                    }
                } else {
                    ColumnEncoding::Numeric { name: name.clone() }
                }
            })
            .collect();
        Ok(Self { columns })
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.columns {
            match c {
                ColumnEncoding::Numeric { name } => out.push(name.clone()),
                ColumnEncoding::Categorical { name, levels } => {
                    out.extend(levels.iter().skip(1).map(|l| level_name(name, *l)))
                }
            }
        }
        out
    }

    /// Encodes `b`. A level unseen during [`fit`](Self::fit) is an error.
    pub fn apply(&self, b: &DataMatrix) -> Result<DataMatrix> {
        let names = self.output_names();
        let mut out = DMatrix::zeros(b.nrows(), names.len());
        let mut k = 0;
        for c in &self.columns {
            match c {
                ColumnEncoding::Numeric { name } => {
                    let j = column(b, name)?;
                    out.set_column(k, &b.values().column(j));
                    k += 1;
                }
                ColumnEncoding::Categorical { name, levels } => {
                    let j = column(b, name)?;
                    for i in 0..b.nrows() {
                        let v = b.get(i, j);
                        let pos = levels
                            .iter()
                            .position(|l| *l == v)
                            .ok_or_else(|| Error::InvalidParams(format!("`{name}` has unseen level {v}")))?;
                        if pos > 0 {
                            out[(i, k + pos - 1)] = 1.0;
                        }
                    }
                    k += levels.len() - 1;
                }
            }
        }
        DataMatrix::new(out, names)
    }
}

fn column(b: &DataMatrix, name: &str) -> Result<usize> {
    b.column_index(name)
        .ok_or_else(|| Error::FeatureMismatch(format!("missing sensitive column `{name}`")))
}
