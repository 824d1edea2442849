//! Sparse mmWave MIMO channel estimation.
//!
//! The crate models a narrowband point-to-point link whose beamspace
//! ("virtual") channel has only a few nonzero entries, and estimates it
//! from block training with a three-phase turbo loop:
//!
//! 1. coarse least squares over the whole virtual channel,
//! 2. Bernoulli-Gaussian sparse message passing to infer which entries
//!    are active,
//! 3. least squares restricted to the detected support.
//!
//! Baselines (plain LS, genie-aided LS, LASSO), Cramer-Rao bounds and a
//! Monte-Carlo harness are included.
//!
//! Layout convention used everywhere: the virtual channel entry for
//! receive antenna `i` and transmit beam `j` lives at flat index
//! `i * n_t + j`, and received sample `(i, tau)` lives at `i * t_blocks + tau`.

pub mod channel;
pub mod crlb;
pub mod estimators;
pub mod harness;
pub mod numerics;
pub mod smp;

mod error;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
