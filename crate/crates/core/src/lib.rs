//! Orthogonal-to-bias pre-processing for counterfactually fair prediction.
//!
//! [`ob::fit_ob`] finds the rank-`k` approximation of a standardized
//! non-sensitive matrix `A` that is exactly orthogonal to the sensitive
//! matrix `B` with the smallest Frobenius change; [`sob::fit_sob`] adds an
//! `l1` budget on the basis vectors. The remaining modules provide the
//! predictors, fairness metrics and synthetic structural causal models used
//! to evaluate the transform.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod ob;
pub mod predictors;
pub mod sob;

pub use datagen::{Dataset, OutcomeKind};
pub use error::{Error, Result};
pub use experiment::{evaluate, Evaluation, ExperimentConfig, Method};
pub use matrix::{standardize, truncated_svd, DataMatrix, StandardizationParams, SvdResult};
pub use ob::{fit_ob, transform, BasisRule, FactorPair, LowRankFactors, ObConfig};
pub use predictors::{Predictor, PredictorKind};
pub use sob::{fit_sob, SobConfig, SobResult};
