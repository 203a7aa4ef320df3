//! Brute-force oracles and seeded fixtures for the acceptance suite. The
//! OB oracle never calls the library's solver: scores come from an LU solve
//! of the KKT system and the basis from a search over rotation angles.

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

/// Scores minimizing `||A - S U'||_F` subject to `S' B = 0`, from the KKT
/// system `[I B; B' 0] [s; mu] = [A u; 0]` solved by LU. Linear in `U`, so
/// this returns the `n x q` map `R` with `S = R U`.
pub fn kkt_score_map(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = b.shape();
    let mut kkt = DMatrix::zeros(n + p, n + p);
    kkt.view_mut((0, 0), (n, n)).fill_with_identity();
    kkt.view_mut((0, n), (n, p)).copy_from(b);
    kkt.view_mut((n, 0), (p, n)).copy_from(&b.transpose());
    let mut rhs = DMatrix::zeros(n + p, a.ncols());
    rhs.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular for full-rank B");
    sol.rows(0, n).into_owned()
}

/// First `k` columns of a product of Givens rotations, one per coordinate
/// pair. Every orthonormal `q x k` frame is reachable.
pub fn givens_frame(q: usize, k: usize, angles: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::identity(q, q);
    let mut t = 0;
    for i in 0..q {
        for j in i + 1..q {
            let (s, c) = angles[t].sin_cos();
            for r in 0..q {
                let (x, y) = (m[(r, i)], m[(r, j)]);
                m[(r, i)] = c * x - s * y;
                m[(r, j)] = s * x + c * y;
            }
            t += 1;
        }
    }
    m.columns(0, k).into_owned()
}

pub fn n_angles(q: usize) -> usize {
    q * (q - 1) / 2
}

/// Best constrained error found by a grid over rotation angles followed by
/// pattern-search refinement of the best few grid points.
pub fn brute_force_ob_error(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize, grid: usize) -> f64 {
    let q = a.ncols();
    let r = kkt_score_map(a, b);
    let err = |angles: &[f64]| {
        let u = givens_frame(q, k, angles);
        (a - &r * &u * u.transpose()).norm()
    };
    let m = n_angles(q);
    if m == 0 {
        return err(&[]);
    }
    let step = std::f64::consts::PI / grid as f64;
    let mut cells: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        let angles: Vec<f64> = idx
            .iter()
            .map(|&i| -std::f64::consts::FRAC_PI_2 + i as f64 * step)
            .collect();
        cells.push((err(&angles), angles));
        let mut d = 0;
        while d < m {
            idx[d] += 1;
            if idx[d] < grid {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == m {
            break;
        }
    }
    cells.sort_by(|x, y| x.0.total_cmp(&y.0));
    cells
        .into_iter()
        .take(4)
        .map(|(e0, start)| refine(&err, start, e0, step))
        .fold(f64::INFINITY, f64::min)
}

fn refine(err: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut best: f64, mut h: f64) -> f64 {
    while h > 1e-12 {
        let mut improved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] += dir * h;
                let e = err(&y);
                if e < best {
                    best = e;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}
