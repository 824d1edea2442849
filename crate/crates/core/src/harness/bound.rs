//! Standalone bound queries for one (eta, snr) point.

use super::config::ExperimentConfig;
use crate::channel::{gen_sparse_channel, snr_to_noise_var, TrainingDesign};
use crate::crlb::{crlb_lse, crlb_lse_smp};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub eta: f64,
    pub snr_db: f64,
    pub nonzeros: usize,
    pub noise_var: f64,
    /// Expected channel energy used for normalisation, `L * coefficient variance`.
    pub expected_energy: f64,
    pub crlb_lse_db: f64,
    pub crlb_lse_smp_db: f64,
}

/// Both bounds for the configured system at one point, normalised by the
/// expected channel energy. The support for the sparse bound is drawn from `seed`.
pub fn bound_query(config: &ExperimentConfig, eta: f64, snr_db: f64, seed: u64) -> Result<BoundQuery> {
    let training = TrainingDesign::generate(&config.dims, config.training_kind, config.field, config.training_seed)?;
    let nonzeros = config.nonzeros(eta)?;
    let noise_var = snr_to_noise_var(&training, &config.dims, snr_db)?;
    let expected_energy = nonzeros as f64 * config.coefficient_var(nonzeros);
    let channel = gen_sparse_channel(&config.dims, eta, config.coefficient_var(nonzeros), config.field, seed)?;
    let lse = crlb_lse(&training, config.dims.n_r, noise_var)?;
    let sparse = crlb_lse_smp(&training, &channel.support, noise_var)?;
    Ok(BoundQuery {
        eta,
        snr_db,
        nonzeros,
        noise_var,
        expected_energy,
        crlb_lse_db: lse.nmse_db(expected_energy),
        crlb_lse_smp_db: sparse.nmse_db(expected_energy),
    })
}
