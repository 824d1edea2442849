use chanest::numerics::*;
use chanest::C64;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<C64> {
    DMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

#[test]
fn matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = rand_matrix(&mut rng, 6, 3);
        let y = rand_matrix(&mut rng, 6, 1);
        let gram = a.adjoint() * &a;
        let gi = gram.clone().try_inverse().unwrap();
        let oracle = &gi * a.adjoint() * &y;
        let s = solve_ls(&a, y.as_slice(), 0.5).unwrap();
        assert_eq!(s.rank, 3);
        assert!((s.estimate.clone() - DVector::from_column_slice(oracle.as_slice())).norm() < 1e-10);
        for k in 0..3 {
            assert!((s.covariance_diag[k] - 0.5 * gi[(k, k)].re).abs() < 1e-10);
        }
        let resid = &y - &a * &s.estimate;
        assert!((resid.norm() - s.residual_norm).abs() < 1e-12);
    }
}

#[test]
fn minimum_norm_on_rank_deficient_system() {
    // Two identical columns: any split of the coefficient fits, minimum norm splits evenly.
    let col = [C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(-1.0, 0.0)];
    let a = DMatrix::from_fn(3, 2, |r, _| col[r]);
    let y: Vec<C64> = col.iter().map(|z| z * 4.0).collect();
    let s = solve_ls(&a, &y, 1.0).unwrap();
    assert_eq!(s.rank, 1);
    assert!((s.estimate[0] - C64::new(2.0, 0.0)).norm() < 1e-12);
    assert!((s.estimate[1] - C64::new(2.0, 0.0)).norm() < 1e-12);
    // Wide system.
    let a = DMatrix::from_row_slice(1, 2, &[C64::new(3.0, 0.0), C64::new(4.0, 0.0)]);
    let s = solve_ls(&a, &[C64::new(25.0, 0.0)], 1.0).unwrap();
    assert!((s.estimate[0] - C64::new(3.0, 0.0)).norm() < 1e-12);
    assert!((s.estimate[1] - C64::new(4.0, 0.0)).norm() < 1e-12);
}

#[test]
fn gaussian_pdf_integrates_to_one() {
    for (mean, var) in [(0.0, 1.0), (2.5, 0.3), (-1.0, 4.0)] {
        let (lo, hi, n) = (mean - 20.0 * f64::sqrt(var), mean + 20.0 * f64::sqrt(var), 20000);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * gaussian_pdf(lo + k as f64 * h, mean, var).unwrap();
        }
        assert!((acc * h - 1.0).abs() < 1e-6);
    }
}

#[test]
fn log_density_survives_underflow() {
    let l = log_gaussian_pdf(1e3, 0.0, 1.0).unwrap();
    assert!(l.is_finite() && l < -4.9e5);
    assert_eq!(gaussian_pdf(1e3, 0.0, 1.0).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn residual_is_orthogonal(seed in any::<u64>(), m in 2usize..9, n in 1usize..5) {
        prop_assume!(m >= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(&mut rng, m, n);
        let y = rand_matrix(&mut rng, m, 1);
        let s = solve_ls(&a, y.as_slice(), 1.0).unwrap();
        let r = &y - &a * &s.estimate;
        prop_assert!((a.adjoint() * r).norm() < 1e-8);
        prop_assert!(s.rank <= m.min(n));
    }

    #[test]
    fn bernoulli_is_monotone_and_open(a in -800.0f64..800.0, d in 0.0f64..50.0) {
        let p = bernoulli_from_lr(a);
        let q = bernoulli_from_lr(a + d);
        prop_assert!(q <= p);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((PROB_EPS..=1.0 - PROB_EPS).contains(&p));
    }
}
