//! Channel generation, beamspace representation and the observation model.

mod geometry;
mod record;
mod training;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use self::geometry::{
    array_response, dft_matrix, geometric_channel, grid_angle, inverse_virtual_map, unitarity_error, virtual_map,
    PathParams, VirtualBasis,
};
pub use self::record::{ChannelRecord, TrainingRecord};
pub use self::training::{build_observation_operator, hadamard, ObservationOperator, TrainingDesign, TrainingKind};
pub use crate::numerics::ScalarField;
use crate::{Error, Result, C64};

/// Antenna counts and training length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub n_r: usize,
    pub n_t: usize,
    pub t_blocks: usize,
}

impl SystemDims {
    pub fn new(n_r: usize, n_t: usize, t_blocks: usize) -> Result<Self> {
        let d = Self { n_r, n_t, t_blocks };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_t == 0 {
            return Err(Error::invalid("antenna counts must be at least 1"));
        }
        if self.t_blocks < 2 {
            return Err(Error::invalid("t_blocks must be at least 2"));
        }
        Ok(())
    }

    /// Length of the virtual channel vector.
    pub fn virtual_len(&self) -> usize {
        self.n_r * self.n_t
    }

    /// Length of the stacked observation.
    pub fn obs_len(&self) -> usize {
        self.n_r * self.t_blocks
    }

    /// Flat index of receive antenna `i`, transmit beam `j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_t + j
    }
}

/// Number of nonzeros for sparsity ratio `eta` over `n` entries (round half up).
pub fn sparsity_count(eta: f64, n: usize) -> Result<usize> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("sparsity ratio {eta} must lie in (0, 1]")));
    }
    let l = (eta * n as f64 + 0.5).floor() as usize;
    if l == 0 {
        return Err(Error::invalid(format!("sparsity ratio {eta} gives no nonzero entries for {n} positions")));
    }
    Ok(l.min(n))
}

/// Sparse virtual channel: coefficient vector plus binary support.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualChannel {
    pub dims: SystemDims,
    pub values: DVector<C64>,
    pub support: Vec<bool>,
}

impl VirtualChannel {
    pub fn new(dims: SystemDims, values: DVector<C64>, support: Vec<bool>) -> Result<Self> {
        let n = dims.virtual_len();
        if values.len() != n || support.len() != n {
            return Err(Error::dims(format!(
                "virtual channel needs {n} values and support flags, got {} and {}",
                values.len(),
                support.len()
            )));
        }
        Ok(Self { dims, values, support })
    }

    /// Build from an `n_r x n_t` beamspace matrix; entries with magnitude above `tol` are the support.
    pub fn from_matrix(h_v: &DMatrix<C64>, tol: f64) -> Result<Self> {
        let dims = SystemDims {
            n_r: h_v.nrows(),
            n_t: h_v.ncols(),
            t_blocks: h_v.ncols().max(2),
        };
        let values = DVector::from_iterator(dims.virtual_len(), h_v.transpose().iter().cloned());
        let support = values.iter().map(|z| z.norm() > tol).collect();
        Self::new(dims, values, support)
    }

    /// Composed vector `h_v = U(h) b`.
    pub fn h_v(&self) -> DVector<C64> {
        DVector::from_iterator(
            self.values.len(),
            self.values.iter().zip(&self.support).map(|(v, &b)| if b { *v } else { C64::new(0.0, 0.0) }),
        )
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let h = self.h_v();
        DMatrix::from_fn(self.dims.n_r, self.dims.n_t, |i, j| h[self.dims.index(i, j)])
    }

    pub fn sparsity(&self) -> usize {
        self.support.iter().filter(|&&b| b).count()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        self.support.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect()
    }

    pub fn energy(&self) -> f64 {
        self.h_v().norm_squared()
    }
}

/// Draw `L = round(eta * n_r * n_t)` positions uniformly without replacement and
/// fill them with zero-mean Gaussian values of variance `value_var`.
pub fn gen_sparse_channel(
    dims: &SystemDims,
    eta: f64,
    value_var: f64,
    field: ScalarField,
    seed: u64,
) -> Result<VirtualChannel> {
    let l = sparsity_count(eta, dims.virtual_len())?;
    gen_sparse_channel_count(dims, l, value_var, field, seed)
}

/// Same as [`gen_sparse_channel`] with an explicit nonzero count.
pub fn gen_sparse_channel_count(
    dims: &SystemDims,
    nonzeros: usize,
    value_var: f64,
    field: ScalarField,
    seed: u64,
) -> Result<VirtualChannel> {
    dims.validate()?;
    let n = dims.virtual_len();
    if nonzeros == 0 || nonzeros > n {
        return Err(Error::invalid(format!("nonzero count {nonzeros} must lie in 1..={n}")));
    }
    if !(value_var > 0.0) || !value_var.is_finite() {
        return Err(Error::invalid(format!("value variance {value_var} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, nonzeros).into_vec();
    idx.sort_unstable();
    let mut values = DVector::zeros(n);
    let mut support = vec![false; n];
    for k in idx {
        support[k] = true;
        values[k] = gaussian_sample(&mut rng, value_var, field);
    }
    VirtualChannel::new(*dims, values, support)
}

fn gaussian_sample(rng: &mut ChaCha8Rng, var: f64, field: ScalarField) -> C64 {
    match field {
        ScalarField::Real => C64::new(var.sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0),
        ScalarField::Complex => {
            let s = (var / 2.0).sqrt();
            C64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
        }
    }
}

/// Noise variance per received sample for a given SNR:
/// `||S_bar||_F^2 / (n_r * t_blocks * 10^(snr/10))`.
pub fn snr_to_noise_var(training: &TrainingDesign, dims: &SystemDims, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("SNR {snr_db} dB must be finite")));
    }
    training.check_dims(dims)?;
    let total = dims.n_r as f64 * training.frobenius_sq();
    Ok(total / (dims.obs_len() as f64 * 10f64.powf(snr_db / 10.0)))
}

/// Received samples, stacked antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: DVector<C64>,
    pub noise_var: f64,
    pub snr_db: Option<f64>,
    pub field: ScalarField,
}

impl Observation {
    pub fn new(y: DVector<C64>, noise_var: f64, field: ScalarField) -> Result<Self> {
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::invalid(format!("noise variance {noise_var} must be finite and >= 0")));
        }
        Ok(Self {
            y,
            noise_var,
            snr_db: None,
            field,
        })
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }
}

/// `y = S_bar h_v + n` with i.i.d. noise of variance `noise_var` per sample.
pub fn observe(channel: &VirtualChannel, op: &ObservationOperator, noise_var: f64, seed: u64) -> Result<Observation> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance {noise_var} must be finite and >= 0")));
    }
    let mut y = op.apply(channel.h_v().as_slice())?;
    if noise_var > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for yk in y.iter_mut() {
            *yk += gaussian_sample(&mut rng, noise_var, op.field());
        }
    }
    Observation::new(y, noise_var, op.field())
}
