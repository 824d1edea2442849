use chanest::channel::SystemDims;
use chanest::harness::*;
use chanest::Error;

fn small(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        dims: SystemDims::new(4, 8, 8).unwrap(),
        sparsity_ratios: vec![0.1, 0.25],
        snr_grid_db: vec![10.0, 20.0],
        trials,
        estimators: vec![
            EstimatorKind::Lse,
            EstimatorKind::LseSmp,
            EstimatorKind::GenieLse,
            EstimatorKind::Lasso,
        ],
        bounds: vec![BoundKind::CrlbLse, BoundKind::CrlbLseSmp],
        lasso: LassoConfig {
            grid_points: 8,
            ..LassoConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn csv_bytes(records: &[ResultRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(records, &mut out).unwrap();
    out
}

#[test]
fn single_trial_single_point() {
    let cfg = ExperimentConfig {
        sparsity_ratios: vec![0.1],
        snr_grid_db: vec![10.0],
        trials: 1,
        estimators: vec![EstimatorKind::Lse],
        bounds: vec![],
        ..small(1)
    };
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!((r.estimator.as_str(), r.turbo_iter, r.trials), ("lse", 0, 1));
    assert_eq!(r.nmse_std_err, 0.0);
    assert!(r.nmse_mean.is_finite() && r.nmse_mean > 0.0);
    let text = String::from_utf8(csv_bytes(&records)).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(summarize(&records).unwrap().lines().count(), 1);
}

#[test]
fn grid_is_fully_covered_and_sorted() {
    let cfg = small(3);
    let records = run_experiment(&cfg).unwrap();
    let k = cfg.turbo.max_turbo_iters;
    // lse, genie, lasso, two bounds: one row each; lse_smp: one row per turbo iteration.
    assert_eq!(records.len(), 4 * (5 + k));
    for eta in &cfg.sparsity_ratios {
        for snr in &cfg.snr_grid_db {
            let at: Vec<_> = records.iter().filter(|r| r.eta == *eta && r.snr_db == *snr).collect();
            assert_eq!(at.len(), 5 + k);
            let iters: Vec<usize> = at.iter().filter(|r| r.estimator == "lse_smp").map(|r| r.turbo_iter).collect();
            assert_eq!(iters, (1..=k).collect::<Vec<_>>());
        }
    }
    let mut sorted = records.clone();
    sort_records(&mut sorted);
    assert_eq!(sorted, records);
    assert!(records.iter().all(|r| r.trials == 3 && r.wall_time == 0.0));
    assert!(records.iter().all(|r| r.nmse_mean.is_finite() && r.nmse_mean > 0.0));
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let base = csv_bytes(&run_experiment(&ExperimentConfig {
        workers: Some(1),
        ..small(4)
    })
    .unwrap());
    for w in [2, 3, 8] {
        let other = csv_bytes(&run_experiment(&ExperimentConfig {
            workers: Some(w),
            ..small(4)
        })
        .unwrap());
        assert_eq!(base, other, "workers = {w}");
    }
    let reseeded = csv_bytes(&run_experiment(&ExperimentConfig {
        base_seed: 99,
        ..small(4)
    })
    .unwrap());
    assert_ne!(base, reseeded);
}

#[test]
fn doubling_trials_shrinks_stderr() {
    let cfg = |trials| ExperimentConfig {
        sparsity_ratios: vec![0.25],
        snr_grid_db: vec![10.0],
        estimators: vec![EstimatorKind::Lse],
        bounds: vec![],
        ..small(trials)
    };
    let a = run_experiment(&cfg(400)).unwrap()[0].nmse_std_err;
    let b = run_experiment(&cfg(800)).unwrap()[0].nmse_std_err;
    let ratio = b / a;
    assert!((ratio - 0.5f64.sqrt()).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn csv_round_trips_to_six_digits() {
    let records = run_experiment(&ExperimentConfig {
        timing: true,
        ..small(2)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    emit_csv(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), records.len() + 1);
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!((&a.estimator, a.eta, a.snr_db, a.turbo_iter, a.trials), (&b.estimator, b.eta, b.snr_db, b.turbo_iter, b.trials));
        assert!((a.nmse_mean_db() - b.nmse_mean_db()).abs() <= 1e-5 * a.nmse_mean_db().abs().max(1.0));
    }
    assert!(records.iter().any(|r| r.wall_time > 0.0));
    // Writing what was read gives the same bytes.
    let path2 = dir.path().join("again.csv");
    emit_csv(&back, &path2).unwrap();
    assert_eq!(std::fs::read(&path2).unwrap(), text.into_bytes());
}

#[test]
fn csv_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_csv(&[], &dir.path().join("x.csv")).is_err());
    let records = run_experiment(&ExperimentConfig {
        estimators: vec![EstimatorKind::Lse],
        bounds: vec![],
        ..small(1)
    })
    .unwrap();
    assert!(matches!(
        emit_csv(&records, &dir.path().join("missing/dir/x.csv")),
        Err(Error::Io { .. })
    ));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,c\n1,2,3\n").unwrap();
    assert!(matches!(read_csv(&bad), Err(Error::Format { .. })));
    assert!(matches!(read_csv(&dir.path().join("nope.csv")), Err(Error::Io { .. })));
    assert!(summarize(&[]).is_err());
}

#[test]
fn number_formatting() {
    assert_eq!(fmt_sig6(-7.8), "-7.8");
    assert_eq!(fmt_sig6(0.007), "0.007");
    assert_eq!(fmt_sig6(-27.71849), "-27.7185");
    assert_eq!(fmt_sig6(1234567.0), "1.23457e6");
    assert_eq!(fmt_sig6(0.0000123456789), "1.23457e-5");
    assert_eq!(fmt_sig6(0.0), "0");
}

#[test]
fn bounds_sit_below_estimators() {
    let records = run_experiment(&ExperimentConfig {
        estimators: vec![EstimatorKind::Lse, EstimatorKind::GenieLse],
        ..small(1000)
    })
    .unwrap();
    let get = |name: &str, eta: f64, snr: f64| {
        records
            .iter()
            .filter(|r| r.estimator == name && r.eta == eta && r.snr_db == snr)
            .next_back()
            .unwrap()
            .nmse_mean
    };
    for eta in [0.1, 0.25] {
        for snr in [10.0, 20.0] {
            assert!(get("crlb_lse_smp", eta, snr) < get("crlb_lse", eta, snr));
            assert!((get("lse", eta, snr) / get("crlb_lse", eta, snr) - 1.0).abs() < 0.1);
            let ratio = get("genie_lse", eta, snr) / get("crlb_lse_smp", eta, snr);
            assert!((ratio - 1.0).abs() < 0.1, "eta {eta} snr {snr}: {ratio}");
        }
    }
}

#[test]
fn config_errors_name_the_field() {
    let field_of = |e: Error| match e {
        Error::Config { field, .. } => field,
        other => panic!("not a config error: {other}"),
    };
    assert_eq!(field_of(ConfigFile::parse("trails = 3").unwrap_err()), "trails");
    assert!(ConfigFile::parse("trials = \"many\"").is_err());

    let mut cfg = ExperimentConfig::default();
    cfg.apply(&ConfigFile::parse("sparsity_ratios = [0.1, -0.2]").unwrap()).unwrap();
    assert_eq!(field_of(cfg.validate().unwrap_err()), "sparsity_ratios[1]");

    let mut cfg = ExperimentConfig::default();
    cfg.apply(&ConfigFile::parse("damping = 1.5").unwrap()).unwrap();
    assert_eq!(field_of(cfg.validate().unwrap_err()), "damping");

    let mut cfg = ExperimentConfig::default();
    assert_eq!(
        field_of(cfg.apply(&ConfigFile::parse("threshold = 0.5\ntop_l = 3").unwrap()).unwrap_err()),
        "support_rule"
    );
    for bad in ["trials = 0", "t_blocks = 1", "snr_grid_db = []", "workers = 0", "estimators = []\nbounds = []"] {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&ConfigFile::parse(bad).unwrap()).unwrap();
        assert!(cfg.validate().unwrap_err().is_config_error(), "{bad}");
    }
}

#[test]
fn config_file_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "preset = \"fig6\"\ntrials = 7\nsnr_grid_db = [20.0]\nthreshold = 0.8\n").unwrap();
    let cfg = ExperimentConfig::load(None, Some(&path)).unwrap();
    assert_eq!(cfg.trials, 7);
    assert_eq!(cfg.snr_grid_db, vec![20.0]);
    assert_eq!(cfg.turbo.max_turbo_iters, 8);
    assert_eq!(cfg.estimators, vec![EstimatorKind::LseSmp]);
    let cfg = ExperimentConfig::load(Some(Preset::Fig5), Some(&path)).unwrap();
    assert_eq!(cfg.total_energy, Some(140.0));
    assert_eq!(cfg.trials, 7);
    assert!(ExperimentConfig::load(None, Some(&dir.path().join("missing.toml")))
        .unwrap_err()
        .is_config_error());
    assert!("fig7".parse::<Preset>().is_err());
}

#[test]
fn summary_reports_gaps_and_convergence() {
    let records = run_experiment(&small(5)).unwrap();
    let text = summarize(&records).unwrap();
    assert!(text.contains("lse_smp eta=0.1 snr=20 dB iter=5"));
    assert!(text.contains("crlb_lse_smp"));
    assert!(text.lines().any(|l| l.contains("gap")), "{text}");
    assert!(text.lines().any(|l| l.contains("converge")), "{text}");
}

#[test]
fn bound_query_uses_expected_energy() {
    let q = bound_query(&ExperimentConfig::default(), 0.007, 20.0, 0).unwrap();
    assert_eq!(q.nonzeros, 14);
    assert!((q.noise_var - 0.64).abs() < 1e-12);
    assert!((q.crlb_lse_smp_db - 10.0 * (14.0 * 0.01 / 140.0f64).log10()).abs() < 1e-9);
    assert!(bound_query(&ExperimentConfig::default(), 1.5, 20.0, 0).is_err());
}
