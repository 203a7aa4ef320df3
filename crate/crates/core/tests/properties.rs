mod common;

use common::instance;
use nalgebra::DMatrix;
use obfair::metrics::{auc, cf_metric};
use obfair::ob::{fit_ob, orthogonality_residual, transform, ObConfig};
use obfair::predictors::{fit_logistic, LogisticOptions};
use obfair::sob::{fit_sob, select_theta, SobConfig};
use obfair::{DataMatrix, LowRankFactors};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (8usize..60, 2usize..8, 1usize..3, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ob_output_is_orthogonal_to_b((n, q, p, seed) in shape()) {
        let (a, b) = instance(n, q, p, seed);
        for k in 1..=q.min(n - p - 1) {
            let fp = fit_ob(&a, &b, &ObConfig::new(k)).unwrap();
            let a_tilde = transform(&a, &fp).unwrap();
            prop_assert!(orthogonality_residual(&a_tilde, &b) <= 1e-8 * n as f64);
            let utu = fp.u.transpose() * &fp.u;
            prop_assert!((utu - DMatrix::<f64>::identity(k, k)).amax() <= 1e-8);
            prop_assert!(fp.recon_error >= fp.svd_error - 1e-9);
        }
    }

    #[test]
    fn recon_error_is_nonincreasing_in_k((n, q, p, seed) in shape()) {
        let (a, b) = instance(n, q, p, seed);
        let errs: Vec<f64> = (1..=q.min(n - p - 1))
            .map(|k| fit_ob(&a, &b, &ObConfig::new(k)).unwrap().recon_error)
            .collect();
        prop_assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{errs:?}");
    }

    #[test]
    fn ob_is_idempotent((n, q, p, seed) in shape()) {
        let (a, b) = instance(n, q, p, seed);
        let k = (q / 2).max(1);
        let a1 = transform(&a, &fit_ob(&a, &b, &ObConfig::new(k)).unwrap()).unwrap();
        let a2 = transform(&a1, &fit_ob(&a1, &b, &ObConfig::new(k)).unwrap()).unwrap();
        prop_assert!((a1.values() - a2.values()).amax() <= 1e-8);
    }

    #[test]
    fn univariate_multipliers_are_inner_product_ratios((n, q, _p, seed) in shape()) {
        let (a, b) = instance(n, q, 1, seed);
        let fp = fit_ob(&a, &b, &ObConfig::new(1)).unwrap();
        let bv = b.values().column(0);
        let au = a.values() * fp.u.column(0);
        let lambda = au.dot(&bv) / bv.dot(&bv);
        prop_assert!((fp.multipliers[(0, 0)] - lambda).abs() <= 1e-10 * (1.0 + lambda.abs()));
    }

    #[test]
    fn sob_constraints_hold(seed in any::<u64>(), h_frac in 0.0f64..1.0) {
        let (a, b) = instance(40, 6, 2, seed);
        let h = 1.0 + h_frac * (6f64.sqrt() - 1.0);
        let res = fit_sob(&a, &b, &SobConfig::new(3, h).with_seed(seed)).unwrap();
        for i in 0..3 {
            if !res.converged[i] {
                continue;
            }
            let u = res.u_hat.column(i);
            prop_assert!((u.norm() - 1.0).abs() <= 1e-6);
            prop_assert!(u.lp_norm(1) <= h + 1e-6);
            prop_assert!((res.s_unit.column(i).transpose() * b.values()).amax() <= 1e-6);
        }
        let sts = res.s_unit.transpose() * &res.s_unit;
        prop_assert!((sts - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-6);
        let a_tilde = transform(&a, &res).unwrap();
        prop_assert!(orthogonality_residual(&a_tilde, &b) <= 1e-6);
        prop_assert_eq!(res.rank(), 3);
    }

    #[test]
    fn select_theta_meets_the_budget(v in prop::collection::vec(-5.0f64..5.0, 2..12), t in 0.0f64..1.0) {
        let mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let max = mags.iter().cloned().fold(0.0, f64::max);
        prop_assume!(max > 1e-3);
        prop_assume!(mags.iter().filter(|m| **m == max).count() == 1);
        let h = 1.0 + t * ((v.len() as f64).sqrt() - 1.0);
        let theta = select_theta(&v, h);
        let st: Vec<f64> = v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect();
        let l2 = st.iter().map(|x| x * x).sum::<f64>().sqrt();
        let l1 = st.iter().map(|x| x.abs()).sum::<f64>() / l2;
        prop_assert!(l1 <= h + 1e-8, "l1 {l1} h {h}");
        if theta > 0.0 {
            prop_assert!((l1 - h).abs() <= 1e-6, "l1 {l1} h {h} theta {theta}");
        }
    }

    #[test]
    fn auc_is_invariant_to_monotone_maps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..60).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let s: Vec<f64> = y.iter().map(|yi| yi + rng.random_range(-1.0..1.0)).collect();
        let mapped: Vec<f64> = s.iter().map(|x| (2.0 * x).exp() + 3.0).collect();
        prop_assert!((auc(&s, &y).unwrap() - auc(&mapped, &y).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn logistic_loss_never_increases(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| (rng.random::<f64>() < 1.0 / (1.0 + (-(r[0] - 0.5 * r[1])).exp())) as u8 as f64)
            .collect();
        let x = DataMatrix::from_rows(&rows, vec!["x1".into(), "x2".into()]).unwrap();
        let fit = fit_logistic(&x, &y, &LogisticOptions::default()).unwrap();
        prop_assert!(fit.losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn cf_metric_is_zero_for_identical_worlds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let groups: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let worlds = vec![s.clone(); 3];
        prop_assert_eq!(cf_metric(&s, &worlds, &groups).unwrap(), 0.0);
    }
}
