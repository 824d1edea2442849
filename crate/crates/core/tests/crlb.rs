use chanest::channel::*;
use chanest::crlb::*;
use chanest::estimators::genie_lse;
use chanest::{Error, C64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn design(n_r: usize, n_t: usize, t: usize, kind: TrainingKind, seed: u64) -> (SystemDims, TrainingDesign, DMatrix<C64>) {
    let dims = SystemDims::new(n_r, n_t, t).unwrap();
    let training = TrainingDesign::generate(&dims, kind, ScalarField::Real, seed).unwrap();
    let dense = build_observation_operator(&training, &dims).unwrap().to_dense();
    (dims, training, dense)
}

fn random_support(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    loop {
        let s: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        if s.iter().any(|&b| b) {
            return s;
        }
    }
}

#[test]
fn unrestricted_bound_matches_dense_inverse() {
    for seed in 0..4 {
        let (dims, training, dense) = design(3, 4, 6, TrainingKind::Gaussian, seed);
        let bound = crlb_lse(&training, dims.n_r, 0.3).unwrap();
        let oracle = (dense.adjoint() * &dense).try_inverse().unwrap() * C64::new(0.3, 0.0);
        assert!((bound.to_dense() - &oracle).norm() < 1e-10 * oracle.norm());
        assert!((bound.trace - oracle.trace().re).abs() < 1e-10 * bound.trace);
    }
}

#[test]
fn orthogonal_training_gives_closed_form() {
    let (_, training, _) = design(32, 64, 64, TrainingKind::Orthogonal, 0);
    let bound = crlb_lse(&training, 32, 0.64).unwrap();
    assert!((bound.trace - 2048.0 * 0.64 / 64.0).abs() < 1e-9);
    assert!(bound.diagonal().iter().all(|&d| (d - 0.01).abs() < 1e-12));
}

#[test]
fn restricted_bound_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..6 {
        let (dims, training, dense) = design(3, 5, 7, TrainingKind::Gaussian, seed);
        let support = random_support(&mut rng, dims.virtual_len(), 0.4);
        let cols: Vec<usize> = (0..support.len()).filter(|&k| support[k]).collect();
        let sub = dense.select_columns(&cols);
        let inv = (sub.adjoint() * &sub).try_inverse().unwrap() * C64::new(0.5, 0.0);
        let bound = crlb_lse_smp(&training, &support, 0.5).unwrap().to_dense();
        for (a, &ka) in cols.iter().enumerate() {
            for (b, &kb) in cols.iter().enumerate() {
                assert!((bound[(ka, kb)] - inv[(a, b)]).norm() < 1e-10);
            }
        }
        for k in (0..support.len()).filter(|&k| !support[k]) {
            assert!(bound.row(k).iter().all(|z| z.norm() < 1e-12));
            assert!(bound.column(k).iter().all(|z| z.norm() < 1e-12));
        }
    }
}

#[test]
fn projector_is_support_indicator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (dims, training, _) = design(4, 8, 8, TrainingKind::Orthogonal, 0);
    let support = random_support(&mut rng, dims.virtual_len(), 0.3);
    let fim = fim_sparse(&training, &support, 0.2).unwrap();
    assert!(fim.constraint_ok);
    let g = fim.g_dense();
    let want = DMatrix::from_diagonal(&DVector::from_fn(support.len(), |k, _| C64::new(if support[k] { 1.0 } else { 0.0 }, 0.0)));
    assert!((g - want).norm() < 1e-10);
    let rank: usize = fim.blocks.iter().map(|b| b.rank).sum();
    assert_eq!(rank, support.iter().filter(|&&b| b).count());
    let bound = crlb_lse_smp(&training, &support, 0.2).unwrap();
    assert!((fim.crlb_trace - bound.trace).abs() < 1e-12);
    for b in &fim.blocks {
        assert!((&b.fim * &b.fim_pinv * &b.fim - &b.fim).norm() < 1e-9 * b.fim.norm().max(1e-300));
    }
    assert_eq!(fim.fim_dense().nrows(), support.len());
}

#[test]
fn knowing_the_support_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..6 {
        let (dims, training, _) = design(2, 6, 8, TrainingKind::Gaussian, seed);
        let support = random_support(&mut rng, dims.virtual_len(), 0.5);
        let full = crlb_lse(&training, 2, 1.0).unwrap();
        let sparse = crlb_lse_smp(&training, &support, 1.0).unwrap();
        assert!(sparse.trace <= full.trace);
        let (df, ds) = (full.diagonal(), sparse.diagonal());
        for k in (0..support.len()).filter(|&k| support[k]) {
            assert!(ds[k] <= df[k] + 1e-12);
        }
    }
    let (_, training, _) = design(2, 6, 8, TrainingKind::Gaussian, 0);
    assert!((crlb_lse_smp(&training, &[true; 12], 1.0).unwrap().trace - crlb_lse(&training, 2, 1.0).unwrap().trace).abs() < 1e-10);
}

#[test]
fn bounds_scale_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (dims, training, _) = design(3, 4, 5, TrainingKind::Gaussian, 9);
    let support = random_support(&mut rng, dims.virtual_len(), 0.5);
    for c in [0.1, 2.0, 37.0] {
        let a = crlb_lse(&training, 3, 1.0).unwrap().trace;
        let b = crlb_lse(&training, 3, c).unwrap().trace;
        assert!((b - c * a).abs() < 1e-10 * b);
        let a = crlb_lse_smp(&training, &support, 1.0).unwrap().trace;
        let b = crlb_lse_smp(&training, &support, c).unwrap().trace;
        assert!((b - c * a).abs() < 1e-10 * b);
    }
    assert_eq!(crlb_lse(&training, 3, 0.0).unwrap().trace, 0.0);
}

#[test]
fn invalid_inputs() {
    let (_, training, _) = design(2, 4, 4, TrainingKind::Orthogonal, 0);
    assert!(crlb_lse(&training, 2, -1.0).is_err());
    assert!(crlb_lse(&training, 0, 1.0).is_err());
    assert!(fim_sparse(&training, &[true; 8], 0.0).is_err());
    assert!(crlb_lse_smp(&training, &[true; 7], 1.0).is_err());

    let m = DMatrix::from_fn(4, 3, |r, c| C64::new(if c == 2 { 1.0 } else { (r + c) as f64 }, 0.0));
    let mut cols = m.clone();
    cols.set_column(2, &m.column(0).clone_owned());
    let degenerate = TrainingDesign::from_matrix(cols, TrainingKind::Gaussian, ScalarField::Real).unwrap();
    assert!(matches!(crlb_lse(&degenerate, 1, 1.0), Err(Error::RankDeficient { rank: 2, needed: 3, .. })));
    // Restricted to independent columns the bound still exists.
    assert!(crlb_lse_smp(&degenerate, &[true, true, false], 1.0).is_ok());
}

#[test]
fn genie_covariance_meets_the_bound() {
    let (dims, training, _) = design(2, 8, 12, TrainingKind::Gaussian, 5);
    let op = build_observation_operator(&training, &dims).unwrap();
    let channel = gen_sparse_channel_count(&dims, 5, 10.0, ScalarField::Real, 3).unwrap();
    let noise_var = 0.4;
    let bound = crlb_lse_smp(&training, &channel.support, noise_var).unwrap().diagonal();
    let truth = channel.h_v();
    let trials = 5000;
    let mut second = vec![0.0; dims.virtual_len()];
    for r in 0..trials {
        let obs = observe(&channel, &op, noise_var, 1000 + r).unwrap();
        let est = genie_lse(&obs, &training, &channel.support, noise_var).unwrap();
        for k in 0..second.len() {
            second[k] += (est.h_v[k] - truth[k]).norm_sqr() / trials as f64;
        }
    }
    for k in 0..second.len() {
        if channel.support[k] {
            assert!((second[k] / bound[k] - 1.0).abs() < 0.1, "k {k}: {} vs {}", second[k], bound[k]);
        } else {
            assert_eq!(second[k], 0.0);
        }
    }
}
