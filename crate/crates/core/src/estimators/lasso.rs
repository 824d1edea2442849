//! l1-regularised least squares by accelerated proximal gradient.

use nalgebra::{DMatrix, DVector};

use super::{nmse, obs_dims};
use crate::channel::{Observation, TrainingDesign, VirtualChannel};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub max_iters: usize,
    /// Relative change `||x_k - x_{k-1}|| / ||x_k||` at which iteration stops.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoResult {
    pub h_v: DVector<C64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Complex soft threshold `z * max(0, 1 - t / |z|)`.
pub fn soft_threshold(z: C64, t: f64) -> C64 {
    let mag = z.norm();
    if mag <= t {
        C64::new(0.0, 0.0)
    } else {
        z * ((mag - t) / mag)
    }
}

/// `||S_bar^H y||_inf`, the smallest penalty giving the all-zero solution.
pub fn lambda_max(observation: &Observation, training: &TrainingDesign) -> Result<f64> {
    let (_, b) = block_rhs(observation, training)?;
    Ok(b.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `points` log-spaced penalties from `lambda_max` down to `ratio * lambda_max`, descending.
pub fn lambda_grid(lambda_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if points == 0 || !(lambda_max > 0.0) {
        return Vec::new();
    }
    if points == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (points - 1) as f64;
    (0..points).map(|k| lambda_max * (step * k as f64).exp()).collect()
}

/// `c * sigma_n * sqrt(2 ln n)`.
pub fn blind_lambda(noise_var: f64, n: usize, c: f64) -> f64 {
    c * noise_var.sqrt() * (2.0 * (n as f64).ln()).sqrt()
}

/// Per-antenna right-hand sides `S^H y_i` as columns.
fn block_rhs(observation: &Observation, training: &TrainingDesign) -> Result<(usize, DMatrix<C64>)> {
    let dims = obs_dims(observation, training)?;
    let y = DMatrix::from_column_slice(dims.t_blocks, dims.n_r, observation.y.as_slice());
    Ok((dims.n_r, training.s_block.adjoint() * y))
}

fn lasso_from(
    observation: &Observation,
    training: &TrainingDesign,
    lambda: f64,
    options: &LassoOptions,
    start: Option<&DMatrix<C64>>,
) -> Result<(DMatrix<C64>, usize, bool)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda {lambda} must be finite and >= 0")));
    }
    if !(options.tol >= 0.0) {
        return Err(Error::invalid("LASSO tolerance must be >= 0"));
    }
    let (n_r, b) = block_rhs(observation, training)?;
    let gram = training.gram();
    let lip = training
        .s_block
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .powi(2);
    let nt = training.n_t();
    if !(lip > 0.0) {
        return Ok((DMatrix::zeros(nt, n_r), 0, true));
    }
    let step = 1.0 / lip;
    let thr = lambda * step;

    let mut x = start.cloned().unwrap_or_else(|| DMatrix::zeros(nt, n_r));
    let mut z = x.clone();
    let mut t = 1.0f64;
    for it in 1..=options.max_iters {
        let grad = &gram * &z - &b;
        let mut next = &z - grad * C64::new(step, 0.0);
        next.apply(|v| *v = soft_threshold(*v, thr));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let diff = &next - &x;
        let change = diff.norm();
        z = &next + diff * C64::new((t - 1.0) / t_next, 0.0);
        x = next;
        t = t_next;
        if change <= options.tol * x.norm() || change == 0.0 {
            return Ok((x, it, true));
        }
    }
    Ok((x, options.max_iters, false))
}

fn flatten(x: DMatrix<C64>) -> DVector<C64> {
    // Column i of x is antenna block i, so column-major storage is already antenna-major.
    DVector::from_column_slice(x.as_slice())
}

/// Minimise `1/2 ||y - S_bar h||^2 + lambda ||h||_1`.
pub fn lasso(
    observation: &Observation,
    training: &TrainingDesign,
    lambda: f64,
    options: &LassoOptions,
) -> Result<LassoResult> {
    let (x, iterations, converged) = lasso_from(observation, training, lambda, options, None)?;
    Ok(LassoResult {
        h_v: flatten(x),
        iterations,
        converged,
    })
}

/// Pick a penalty from `grid`.
///
/// With `truth`, returns the grid value with the lowest NMSE (warm-started
/// from the largest penalty down) together with its solution. Without it,
/// returns the grid value closest in log scale to [`blind_lambda`] with constant `blind_c`.
pub fn select_lambda(
    observation: &Observation,
    training: &TrainingDesign,
    grid: &[f64],
    truth: Option<&VirtualChannel>,
    blind_c: f64,
    options: &LassoOptions,
) -> Result<(f64, LassoResult)> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("lambda grid values must be finite and >= 0"));
    }
    let Some(truth) = truth else {
        let n = obs_dims(observation, training)?.virtual_len();
        let target = blind_lambda(observation.noise_var, n, blind_c);
        let dist = |l: f64| (l.max(f64::MIN_POSITIVE).ln() - target.max(f64::MIN_POSITIVE).ln()).abs();
        let best = grid
            .iter()
            .cloned()
            .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
            .expect("non-empty");
        return Ok((best, lasso(observation, training, best, options)?));
    };
    let h = truth.h_v();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut warm: Option<DMatrix<C64>> = None;
    let mut best: Option<(f64, usize, LassoResult)> = None;
    for k in order {
        let (x, iterations, converged) = lasso_from(observation, training, grid[k], options, warm.as_ref())?;
        warm = Some(x.clone());
        let h_v = flatten(x);
        let err = nmse(h_v.as_slice(), h.as_slice())?;
        let better = match &best {
            None => true,
            Some((e, idx, _)) => err < *e || (err == *e && k < *idx),
        };
        if better {
            best = Some((err, k, LassoResult { h_v, iterations, converged }));
        }
    }
    let (_, k, res) = best.expect("non-empty grid");
    Ok((grid[k], res))
}
