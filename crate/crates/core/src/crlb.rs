//! Fisher information and Cramer-Rao bounds for unrestricted and support-restricted estimation.
//!
//! All matrices are block diagonal over receive antennas, so everything is
//! stored as one `n_t x n_t` block per antenna.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::channel::TrainingDesign;
use crate::numerics::LsFactor;
use crate::{Error, Result, C64};

/// Tolerance for the singular-FIM constraint check.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// A block-diagonal covariance bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBound {
    pub blocks: Vec<DMatrix<C64>>,
    pub trace: f64,
}

impl BlockBound {
    fn from_blocks(blocks: Vec<DMatrix<C64>>) -> Self {
        let trace = blocks.iter().map(|b| b.trace().re).sum();
        Self { blocks, trace }
    }

    /// Diagonal of the full bound, antenna-major.
    pub fn diagonal(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.diagonal().iter().map(|z| z.re).collect::<Vec<_>>()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        block_diag(&self.blocks)
    }

    /// `10 log10(trace / energy)`.
    pub fn nmse_db(&self, energy: f64) -> f64 {
        10.0 * (self.trace / energy).log10()
    }
}

fn block_diag(blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), b.shape()).copy_from(b);
        off += b.nrows();
    }
    out
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var >= 0.0 && noise_var.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise variance {noise_var} must be finite and >= 0")))
    }
}

/// `noise_var * (S_bar^H S_bar)^{-1}` for `n_r` antennas.
pub fn crlb_lse(training: &TrainingDesign, n_r: usize, noise_var: f64) -> Result<BlockBound> {
    check_noise(noise_var)?;
    if n_r == 0 {
        return Err(Error::invalid("n_r must be at least 1"));
    }
    let gram = training.gram();
    let factor = LsFactor::new(&gram)?;
    if factor.rank() < training.n_t() {
        return Err(Error::RankDeficient {
            block: 0,
            rank: factor.rank(),
            needed: training.n_t(),
        });
    }
    let block = factor.pinv() * C64::new(noise_var, 0.0);
    Ok(BlockBound::from_blocks(vec![block; n_r]))
}

/// Per-antenna pieces of the support-restricted Fisher information.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBlock {
    /// `(S U(b_i))^H S U(b_i) / noise_var`.
    pub fim: DMatrix<C64>,
    pub fim_pinv: DMatrix<C64>,
    /// `M^+ M` with `M = (S U(b_i))^H S U(b_i)`; equals `diag(b_i)` for independent columns.
    pub g_matrix: DMatrix<C64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimResult {
    pub blocks: Vec<FimBlock>,
    /// Trace of `G I^+ G^H`.
    pub crlb_trace: f64,
    /// `G = G I I^+` to [`CONSTRAINT_TOL`] in every block.
    pub constraint_ok: bool,
}

impl FimResult {
    pub fn fim_dense(&self) -> DMatrix<C64> {
        block_diag(&self.blocks.iter().map(|b| b.fim.clone()).collect::<Vec<_>>())
    }

    pub fn g_dense(&self) -> DMatrix<C64> {
        block_diag(&self.blocks.iter().map(|b| b.g_matrix.clone()).collect::<Vec<_>>())
    }
}

struct SparseParts {
    /// `M^+` and `G` per block.
    blocks: Vec<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>, usize)>,
    constraint_ok: bool,
}

fn sparse_parts(training: &TrainingDesign, support: &[bool]) -> Result<SparseParts> {
    let nt = training.n_t();
    if support.is_empty() || support.len() % nt != 0 {
        return Err(Error::dims(format!(
            "support length {} is not a multiple of n_t = {nt}",
            support.len()
        )));
    }
    let gram = training.gram();
    let mut cache: HashMap<&[bool], (DMatrix<C64>, DMatrix<C64>, DMatrix<C64>, usize)> = HashMap::new();
    let mut blocks = Vec::with_capacity(support.len() / nt);
    let mut constraint_ok = true;
    for b in support.chunks(nt) {
        if !cache.contains_key(b) {
            let m = DMatrix::from_fn(nt, nt, |r, c| if b[r] && b[c] { gram[(r, c)] } else { C64::new(0.0, 0.0) });
            let f = LsFactor::new(&m)?;
            let m_pinv = f.pinv().clone();
            let g = &m_pinv * &m;
            let residual = (&g - &g * &m * &m_pinv).norm();
            cache.insert(b, (m, m_pinv, g, f.rank()));
            if residual > CONSTRAINT_TOL {
                constraint_ok = false;
            }
        }
        blocks.push(cache[b].clone());
    }
    Ok(SparseParts { blocks, constraint_ok })
}

/// Support-restricted Fisher information, its pseudo-inverse and the projector `G`.
pub fn fim_sparse(training: &TrainingDesign, support: &[bool], noise_var: f64) -> Result<FimResult> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance {noise_var} must be positive")));
    }
    let parts = sparse_parts(training, support)?;
    let mut crlb_trace = 0.0;
    let blocks = parts
        .blocks
        .into_iter()
        .map(|(m, m_pinv, g, rank)| {
            let fim_pinv = &m_pinv * C64::new(noise_var, 0.0);
            crlb_trace += (&g * &fim_pinv * g.adjoint()).trace().re;
            FimBlock {
                fim: m / C64::new(noise_var, 0.0),
                fim_pinv,
                g_matrix: g,
                rank,
            }
        })
        .collect();
    Ok(FimResult {
        blocks,
        crlb_trace,
        constraint_ok: parts.constraint_ok,
    })
}

/// `G I^+ G^H = noise_var * ((S_bar U(b))^H S_bar U(b))^+`.
pub fn crlb_lse_smp(training: &TrainingDesign, support: &[bool], noise_var: f64) -> Result<BlockBound> {
    check_noise(noise_var)?;
    let parts = sparse_parts(training, support)?;
    if !parts.constraint_ok {
        return Err(Error::CrlbInvalid);
    }
    let blocks = parts
        .blocks
        .into_iter()
        .map(|(_, m_pinv, g, _)| &g * m_pinv * g.adjoint() * C64::new(noise_var, 0.0))
        .collect();
    Ok(BlockBound::from_blocks(blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ScalarField, SystemDims, TrainingKind};

    fn orth(n_t: usize, t: usize) -> TrainingDesign {
        let dims = SystemDims::new(2, n_t, t).unwrap();
        TrainingDesign::generate(&dims, TrainingKind::Orthogonal, ScalarField::Real, 1).unwrap()
    }

    #[test]
    fn orthogonal_lse_bound() {
        let s = orth(4, 8);
        let b = crlb_lse(&s, 2, 0.4).unwrap();
        let want = DMatrix::<C64>::identity(4, 4) * C64::new(0.05, 0.0);
        for blk in &b.blocks {
            assert!((blk - &want).norm() < 1e-12);
        }
        assert!((b.trace - 0.4).abs() < 1e-12);
        assert_eq!(crlb_lse(&s, 2, 0.0).unwrap().trace, 0.0);
    }

    #[test]
    fn rank_deficient_lse_bound() {
        let s = TrainingDesign::from_matrix(
            DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0)]),
            TrainingKind::Gaussian,
            ScalarField::Real,
        )
        .unwrap();
        assert!(matches!(crlb_lse(&s, 1, 1.0), Err(Error::RankDeficient { block: 0, rank: 1, needed: 2 })));
    }

    #[test]
    fn sparse_examples() {
        let s = orth(4, 4);
        let all = vec![true; 8];
        let f = fim_sparse(&s, &all, 2.0).unwrap();
        assert!((f.fim_dense() - DMatrix::<C64>::identity(8, 8) * C64::new(2.0, 0.0)).norm() < 1e-12);
        assert!(f.blocks.iter().all(|b| b.rank == 4));

        let none = vec![false; 8];
        let f = fim_sparse(&s, &none, 2.0).unwrap();
        assert_eq!(f.g_dense().norm(), 0.0);
        assert!(f.constraint_ok);
        assert!(fim_sparse(&s, &none, 0.0).is_err());

        let b = vec![true, false, false, true, false, true, false, false];
        let bound = crlb_lse_smp(&s, &b, 2.0).unwrap();
        let diag = bound.diagonal();
        for (k, &on) in b.iter().enumerate() {
            assert!((diag[k] - if on { 0.5 } else { 0.0 }).abs() < 1e-12);
        }
    }
}
