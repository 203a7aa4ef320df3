//! Seeded instances shared by the integration targets.

use nalgebra::DMatrix;
use obfair::{standardize, DataMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn standardized(m: DMatrix<f64>, prefix: &str) -> DataMatrix {
    standardize(&DataMatrix::with_prefix(m, prefix).unwrap()).unwrap().0
}

/// Standardized `A` (n x q) correlated with standardized `B` (n x p).
pub fn instance(n: usize, q: usize, p: usize, seed: u64) -> (DataMatrix, DataMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = gaussian(n, p, &mut rng);
    let mix = gaussian(p, q, &mut rng);
    let a = gaussian(n, q, &mut rng) + &b * mix;
    (standardized(a, "a"), standardized(b, "b"))
}
