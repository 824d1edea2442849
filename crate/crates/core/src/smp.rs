//! Bernoulli-Gaussian sparse message passing for support detection.
//!
//! The factor graph has one sum node per received sample `(i, tau)` and one
//! variable node per virtual-channel entry `(i, j)`. Sum nodes only connect to
//! variables of the same receive antenna, so every structure here is stored
//! as `n_r` independent `t_blocks x n_t` blocks, flattened as
//! `(i * t_blocks + tau) * n_t + j`.
//!
//! Sum-to-variable messages are kept as unclamped log-ratios
//! `ln P(b = 0) / P(b = 1)`; only probabilities are clamped. Clamping every
//! edge at `PROB_EPS` would cap the evidence one sample can contribute and
//! lets a single strong interferer hide a large coefficient.

use nalgebra::DVector;

use crate::channel::{Observation, SystemDims, TrainingDesign};
use crate::numerics::{bernoulli_from_lr, binary_entropy, log_density_gap, lr_from_prob, ScalarField, PROB_EPS};
use crate::{Error, Result, C64};

/// Relative floor on sum-node variances (interference plus noise), scaled by the node's
/// total signal energy. Only binds when the noise variance is negligible.
const VAR_REL_FLOOR: f64 = 1e-12;

/// Default convergence threshold on `max |delta p_v|`.
pub const DEFAULT_SMP_TOL: f64 = 1e-6;

/// Prior probability that an entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmpPrior {
    p1: f64,
}

impl SmpPrior {
    pub fn new(p1: f64) -> Result<Self> {
        if p1 > 0.0 && p1 < 1.0 {
            Ok(Self { p1 })
        } else {
            Err(Error::invalid(format!("prior probability {p1} must lie in (0, 1)")))
        }
    }

    /// `nonzeros / total`.
    pub fn from_sparsity(nonzeros: usize, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::invalid("empty channel"));
        }
        Self::new(nonzeros as f64 / total as f64)
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    /// `ln(p0 / p1)`.
    pub fn log_ratio(&self) -> f64 {
        lr_from_prob(self.p1)
    }
}

/// Current mean and variance of every virtual-channel coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBelief {
    pub h_hat: DVector<C64>,
    pub v_h: DVector<f64>,
}

impl ChannelBelief {
    pub fn new(h_hat: DVector<C64>, v_h: DVector<f64>) -> Result<Self> {
        if h_hat.len() != v_h.len() {
            return Err(Error::dims("belief mean and variance lengths differ"));
        }
        if v_h.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("belief variances must be finite and >= 0"));
        }
        if h_hat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("belief means must be finite"));
        }
        Ok(Self { h_hat, v_h })
    }

    pub fn len(&self) -> usize {
        self.h_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_hat.is_empty()
    }
}

/// All edge messages of the factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    dims: SystemDims,
    /// Interference mean seen by each edge, sum to variable.
    pub e_s: Vec<C64>,
    /// Interference-plus-noise variance seen by each edge.
    pub v_s: Vec<f64>,
    /// Sum-to-variable log-ratios `ln P(b=0)/P(b=1)`.
    pub lr_s: Vec<f64>,
    /// Variable-to-sum probabilities `P(b = 1)`.
    pub p_v: Vec<f64>,
    pub iteration: usize,
}

impl MessageState {
    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    /// Flat index of edge `(i, tau) -- (i, j)`.
    pub fn edge(&self, i: usize, tau: usize, j: usize) -> usize {
        (i * self.dims.t_blocks + tau) * self.dims.n_t + j
    }

    /// Sum-to-variable probabilities `P(b = 1)`, clamped.
    pub fn p_s(&self) -> Vec<f64> {
        self.lr_s.iter().map(|&l| bernoulli_from_lr(l)).collect()
    }

    /// Overwrite sum-to-variable messages from probabilities.
    pub fn set_p_s(&mut self, p_s: &[f64]) -> Result<()> {
        if p_s.len() != self.lr_s.len() {
            return Err(Error::dims("p_s length does not match the graph"));
        }
        for (l, &p) in self.lr_s.iter_mut().zip(p_s) {
            *l = lr_from_prob(p.clamp(PROB_EPS, 1.0 - PROB_EPS));
        }
        Ok(())
    }

    fn check_dims(&self, dims: &SystemDims) -> Result<()> {
        if self.dims != *dims {
            return Err(Error::dims("message state was built for different dimensions"));
        }
        Ok(())
    }
}

/// Fresh messages: every `p_v` at the prior, everything else zero.
pub fn init_messages(dims: &SystemDims, prior: &SmpPrior) -> MessageState {
    let edges = dims.n_r * dims.t_blocks * dims.n_t;
    MessageState {
        dims: *dims,
        e_s: vec![C64::new(0.0, 0.0); edges],
        v_s: vec![0.0; edges],
        lr_s: vec![0.0; edges],
        p_v: vec![prior.p1(); edges],
        iteration: 0,
    }
}

fn graph_dims(training: &TrainingDesign, belief: &ChannelBelief) -> Result<SystemDims> {
    let n_t = training.n_t();
    if belief.is_empty() || belief.len() % n_t != 0 {
        return Err(Error::dims(format!(
            "belief length {} is not a multiple of n_t = {n_t}",
            belief.len()
        )));
    }
    SystemDims::new(belief.len() / n_t, n_t, training.t_blocks())
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var >= 0.0 && noise_var.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise variance {noise_var} must be finite and >= 0")))
    }
}

/// Sum-node update: Gaussian approximation of the interference from all other
/// variables attached to each sample.
pub fn sum_node_update(
    state: &mut MessageState,
    belief: &ChannelBelief,
    training: &TrainingDesign,
    noise_var: f64,
) -> Result<()> {
    check_noise(noise_var)?;
    let dims = graph_dims(training, belief)?;
    state.check_dims(&dims)?;
    let (t, nt) = (dims.t_blocks, dims.n_t);
    let s = &training.s_block;
    for i in 0..dims.n_r {
        let h = &belief.h_hat.as_slice()[i * nt..(i + 1) * nt];
        let vh = &belief.v_h.as_slice()[i * nt..(i + 1) * nt];
        for tau in 0..t {
            let base = (i * t + tau) * nt;
            let pv = &state.p_v[base..base + nt];
            let mut mean = C64::new(0.0, 0.0);
            let mut var = 0.0;
            let mut energy = 0.0;
            for m in 0..nt {
                let stm = s[(tau, m)];
                let s2 = stm.norm_sqr();
                let h2 = h[m].norm_sqr();
                mean += stm * h[m] * pv[m];
                var += s2 * pv[m] * (vh[m] + h2 * (1.0 - pv[m]));
                energy += s2 * (vh[m] + h2);
            }
            let floor = (VAR_REL_FLOOR * energy).max(f64::MIN_POSITIVE);
            for j in 0..nt {
                let stj = s[(tau, j)];
                let p = state.p_v[base + j];
                let own_var = stj.norm_sqr() * p * (vh[j] + h[j].norm_sqr() * (1.0 - p));
                state.e_s[base + j] = mean - stj * h[j] * p;
                state.v_s[base + j] = ((var - own_var).max(0.0) + noise_var).max(floor);
            }
        }
    }
    Ok(())
}

/// Sum-to-variable messages: log-likelihood ratio of "entry inactive" vs
/// "entry active" for each sample given the interference statistics.
pub fn sum_to_var_prob(
    state: &mut MessageState,
    belief: &ChannelBelief,
    observation: &Observation,
    training: &TrainingDesign,
) -> Result<()> {
    let dims = graph_dims(training, belief)?;
    state.check_dims(&dims)?;
    if observation.y.len() != dims.obs_len() {
        return Err(Error::dims(format!(
            "observation has length {}, expected {}",
            observation.y.len(),
            dims.obs_len()
        )));
    }
    let (t, nt) = (dims.t_blocks, dims.n_t);
    let s = &training.s_block;
    let field: ScalarField = observation.field;
    for i in 0..dims.n_r {
        for tau in 0..t {
            let y = observation.y[i * t + tau];
            let base = (i * t + tau) * nt;
            for j in 0..nt {
                let k = base + j;
                let sj = s[(tau, j)];
                let hk = belief.h_hat[i * nt + j];
                let r0 = y - state.e_s[k];
                let r1 = r0 - sj * hk;
                let v0 = state.v_s[k];
                let v1 = v0 + sj.norm_sqr() * belief.v_h[i * nt + j];
                state.lr_s[k] = log_density_gap(field, r0.norm_sqr(), v0, r1.norm_sqr(), v1);
            }
        }
    }
    Ok(())
}

/// Variable-node update: extrinsic combination of all other samples plus the prior.
pub fn var_node_update(state: &mut MessageState, prior: &SmpPrior) {
    let SystemDims { n_r, n_t, t_blocks: t } = state.dims;
    let prior_lr = prior.log_ratio();
    let mut total = vec![0.0; n_t];
    for i in 0..n_r {
        total.iter_mut().for_each(|x| *x = 0.0);
        for tau in 0..t {
            let base = (i * t + tau) * n_t;
            for j in 0..n_t {
                total[j] += state.lr_s[base + j];
            }
        }
        for tau in 0..t {
            let base = (i * t + tau) * n_t;
            for j in 0..n_t {
                let ext = total[j] - state.lr_s[base + j];
                state.p_v[base + j] = bernoulli_from_lr(ext + prior_lr);
            }
        }
    }
    state.iteration += 1;
}

/// `P(b = 1 | all messages)` for every entry, combining every sample.
pub fn posterior(state: &MessageState, prior: &SmpPrior) -> Vec<f64> {
    let SystemDims { n_r, n_t, t_blocks: t } = state.dims;
    let prior_lr = prior.log_ratio();
    let mut out = vec![0.0; n_r * n_t];
    for i in 0..n_r {
        for j in 0..n_t {
            let mut acc = prior_lr;
            for tau in 0..t {
                acc += state.lr_s[(i * t + tau) * n_t + j];
            }
            out[i * n_t + j] = bernoulli_from_lr(acc);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmpOptions {
    pub inner_iters: usize,
    /// Weight on the new `p_v`; `1.0` disables damping.
    pub damping: f64,
    pub tol: f64,
}

impl Default for SmpOptions {
    fn default() -> Self {
        Self {
            inner_iters: 10,
            damping: 1.0,
            tol: DEFAULT_SMP_TOL,
        }
    }
}

impl SmpOptions {
    pub fn validate(&self) -> Result<()> {
        if self.inner_iters == 0 {
            return Err(Error::invalid("inner_iters must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(format!("damping {} must lie in (0, 1]", self.damping)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("SMP tolerance must be >= 0"));
        }
        Ok(())
    }
}

/// Per-sweep convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmpTraceEntry {
    pub iteration: usize,
    pub max_delta_pv: f64,
    /// Summed binary entropy of the posterior, in nats.
    pub posterior_entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SmpOutcome {
    pub posterior: Vec<f64>,
    pub state: MessageState,
    pub sweeps: usize,
    pub converged: bool,
    pub trace: Vec<SmpTraceEntry>,
}

/// Run flooding sweeps from fresh messages.
pub fn smp_detect(
    observation: &Observation,
    training: &TrainingDesign,
    belief: &ChannelBelief,
    prior: &SmpPrior,
    options: &SmpOptions,
) -> Result<SmpOutcome> {
    let dims = graph_dims(training, belief)?;
    smp_detect_from(observation, training, belief, prior, options, init_messages(&dims, prior))
}

/// Run flooding sweeps starting from existing messages.
pub fn smp_detect_from(
    observation: &Observation,
    training: &TrainingDesign,
    belief: &ChannelBelief,
    prior: &SmpPrior,
    options: &SmpOptions,
    mut state: MessageState,
) -> Result<SmpOutcome> {
    options.validate()?;
    let mut trace = Vec::with_capacity(options.inner_iters);
    let mut old = state.p_v.clone();
    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..options.inner_iters {
        sum_node_update(&mut state, belief, training, observation.noise_var)?;
        sum_to_var_prob(&mut state, belief, observation, training)?;
        old.copy_from_slice(&state.p_v);
        var_node_update(&mut state, prior);
        let d = options.damping;
        let mut max_delta: f64 = 0.0;
        for (p, o) in state.p_v.iter_mut().zip(&old) {
            if d < 1.0 {
                *p = d * *p + (1.0 - d) * o;
            }
            max_delta = max_delta.max((*p - o).abs());
        }
        sweeps += 1;
        let entropy = posterior(&state, prior).iter().map(|&p| binary_entropy(p)).sum();
        trace.push(SmpTraceEntry {
            iteration: state.iteration,
            max_delta_pv: max_delta,
            posterior_entropy: entropy,
        });
        if max_delta < options.tol {
            converged = true;
            break;
        }
    }
    Ok(SmpOutcome {
        posterior: posterior(&state, prior),
        state,
        sweeps,
        converged,
        trace,
    })
}
