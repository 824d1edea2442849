//! Monte-Carlo execution and aggregation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BoundKind, EstimatorKind, ExperimentConfig, LambdaMode};
use crate::channel::{
    build_observation_operator, gen_sparse_channel_count, observe, snr_to_noise_var, ObservationOperator,
    TrainingDesign,
};
use crate::crlb::{crlb_lse, crlb_lse_smp};
use crate::estimators::{
    coarse_lse, genie_lse, lambda_grid, lambda_max, lse_smp, nmse, select_lambda, LassoOptions,
};
use crate::smp::SmpPrior;
use crate::{Error, Result};

/// Aggregated NMSE for one estimator (or bound) at one grid point and turbo iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub estimator: String,
    pub eta: f64,
    pub snr_db: f64,
    /// `0` for estimators without turbo iterations and for bounds.
    pub turbo_iter: usize,
    /// Linear mean NMSE.
    pub nmse_mean: f64,
    /// Standard error of the linear mean.
    pub nmse_std_err: f64,
    pub trials: usize,
    /// Summed compute time across trials, seconds; zero unless timing is enabled.
    pub wall_time: f64,
}

impl ResultRecord {
    pub fn nmse_mean_db(&self) -> f64 {
        10.0 * self.nmse_mean.log10()
    }

    /// First-order (delta method) standard error of the dB mean.
    pub fn nmse_stderr_db(&self) -> f64 {
        if self.nmse_mean > 0.0 {
            10.0 / std::f64::consts::LN_10 * self.nmse_std_err / self.nmse_mean
        } else {
            0.0
        }
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `r` at grid point `g`.
pub fn trial_seed(base_seed: u64, g: usize, r: usize) -> u64 {
    base_seed ^ splitmix64(splitmix64(g as u64) ^ r as u64)
}

const CHANNEL_STREAM: u64 = 0x6368_616e;
const NOISE_STREAM: u64 = 0x6e6f_6973;

/// One output column per (estimator or bound, turbo iteration).
#[derive(Debug, Clone, Copy)]
enum Series {
    Estimator(EstimatorKind, usize),
    Bound(BoundKind),
}

fn series_for(config: &ExperimentConfig) -> Vec<Series> {
    let mut out = Vec::new();
    for &e in &config.estimators {
        if e == EstimatorKind::LseSmp {
            out.extend((1..=config.turbo.max_turbo_iters).map(|k| Series::Estimator(e, k)));
        } else {
            out.push(Series::Estimator(e, 0));
        }
    }
    out.extend(config.bounds.iter().map(|&b| Series::Bound(b)));
    out
}

/// Constants shared by every trial of one (eta, snr) point.
struct GridPoint {
    eta: f64,
    snr_db: f64,
    nonzeros: usize,
    coefficient_var: f64,
    noise_var: f64,
    prior: SmpPrior,
    lse_bound_trace: Option<f64>,
}

struct TrialOutput {
    values: Vec<f64>,
    times: Vec<f64>,
}

struct Shared<'a> {
    config: &'a ExperimentConfig,
    training: TrainingDesign,
    operator: ObservationOperator,
    series: Vec<Series>,
}

fn run_trial(shared: &Shared, point: &GridPoint, seed: u64) -> Result<TrialOutput> {
    let cfg = shared.config;
    let channel = gen_sparse_channel_count(
        &cfg.dims,
        point.nonzeros,
        point.coefficient_var,
        cfg.field,
        splitmix64(seed ^ CHANNEL_STREAM),
    )?;
    let obs = observe(&channel, &shared.operator, point.noise_var, splitmix64(seed ^ NOISE_STREAM))?
        .with_snr(point.snr_db);
    let truth = channel.h_v();
    let energy = truth.norm_squared();
    let training = &shared.training;

    let mut values = vec![0.0; shared.series.len()];
    let mut times = vec![0.0; shared.series.len()];
    let mut smp_trace: Option<(Vec<f64>, f64)> = None;
    for (col, s) in shared.series.iter().enumerate() {
        let start = Instant::now();
        values[col] = match *s {
            Series::Estimator(EstimatorKind::Lse, _) => nmse(coarse_lse(&obs, training)?.h_v.as_slice(), truth.as_slice())?,
            Series::Estimator(EstimatorKind::GenieLse, _) => nmse(
                genie_lse(&obs, training, &channel.support, point.noise_var)?.h_v.as_slice(),
                truth.as_slice(),
            )?,
            Series::Estimator(EstimatorKind::Lasso, _) => {
                let opts = LassoOptions {
                    max_iters: cfg.lasso.max_iters,
                    tol: cfg.lasso.tol,
                };
                let lmax = lambda_max(&obs, training)?;
                let grid = lambda_grid(lmax, cfg.lasso.grid_points, cfg.lasso.grid_ratio);
                let grid = if grid.is_empty() { vec![0.0] } else { grid };
                let truth_arg = (cfg.lasso.lambda_mode == LambdaMode::Oracle).then_some(&channel);
                let (_, res) = select_lambda(&obs, training, &grid, truth_arg, cfg.lasso.blind_c, &opts)?;
                nmse(res.h_v.as_slice(), truth.as_slice())?
            }
            Series::Estimator(EstimatorKind::LseSmp, k) => {
                if smp_trace.is_none() {
                    let res = lse_smp(&obs, training, &point.prior, &cfg.turbo, Some(&channel))?;
                    smp_trace = Some((res.nmse_trace, start.elapsed().as_secs_f64()));
                }
                let (trace, _) = smp_trace.as_ref().expect("set above");
                // After an early stop the estimate is final, so later iterations repeat it.
                trace[(k - 1).min(trace.len() - 1)]
            }
            Series::Bound(BoundKind::CrlbLse) => {
                point.lse_bound_trace.ok_or(Error::CrlbInvalid)? / energy
            }
            Series::Bound(BoundKind::CrlbLseSmp) => {
                crlb_lse_smp(training, &channel.support, point.noise_var)?.trace / energy
            }
        };
        times[col] = match *s {
            Series::Estimator(EstimatorKind::LseSmp, 1) => smp_trace.as_ref().map_or(0.0, |t| t.1),
            Series::Estimator(EstimatorKind::LseSmp, _) => 0.0,
            _ => start.elapsed().as_secs_f64(),
        };
    }
    Ok(TrialOutput { values, times })
}

/// Run every configured estimator and bound over the (eta, snr, trial) grid.
///
/// Output depends only on the configuration: trials are seeded from
/// `(base_seed, grid point, trial index)` and aggregated in a fixed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let training = TrainingDesign::generate(&config.dims, config.training_kind, config.field, config.training_seed)?;
    let operator = build_observation_operator(&training, &config.dims)?;
    let n = config.dims.virtual_len();

    let mut points = Vec::new();
    for &eta in &config.sparsity_ratios {
        let nonzeros = config.nonzeros(eta)?;
        let prior = SmpPrior::from_sparsity(nonzeros, n)
            .or_else(|_| SmpPrior::new(1.0 - 0.5 / n as f64))?;
        for &snr_db in &config.snr_grid_db {
            let noise_var = snr_to_noise_var(&training, &config.dims, snr_db)?;
            let lse_bound_trace = if config.bounds.contains(&BoundKind::CrlbLse) {
                Some(crlb_lse(&training, config.dims.n_r, noise_var)?.trace)
            } else {
                None
            };
            points.push(GridPoint {
                eta,
                snr_db,
                nonzeros,
                coefficient_var: config.coefficient_var(nonzeros),
                noise_var,
                prior,
                lse_bound_trace,
            });
        }
    }

    let shared = Shared {
        config,
        training,
        operator,
        series: series_for(config),
    };
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|g| (0..config.trials).map(move |r| (g, r)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(g, r)| run_trial(&shared, &points[g], trial_seed(config.base_seed, g, r)))
            .collect::<Result<Vec<_>>>()
    };
    let outputs = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {w} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut records = Vec::new();
    for (g, point) in points.iter().enumerate() {
        let trials = &outputs[g * config.trials..(g + 1) * config.trials];
        for (col, s) in shared.series.iter().enumerate() {
            let (name, turbo_iter) = match *s {
                Series::Estimator(e, k) => (e.name(), k),
                Series::Bound(b) => (b.name(), 0),
            };
            let (mean, std_err) = mean_and_stderr(trials.iter().map(|t| t.values[col]));
            records.push(ResultRecord {
                estimator: name.to_string(),
                eta: point.eta,
                snr_db: point.snr_db,
                turbo_iter,
                nmse_mean: mean,
                nmse_std_err: std_err,
                trials: trials.len(),
                wall_time: if config.timing {
                    trials.iter().map(|t| t.times[col]).sum()
                } else {
                    0.0
                },
            });
        }
    }
    sort_records(&mut records);
    Ok(records)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Sort by (estimator, eta, snr, turbo iteration).
pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.eta.total_cmp(&b.eta))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.turbo_iter.cmp(&b.turbo_iter))
    });
}
