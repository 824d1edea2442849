//! Training matrices and the block-diagonal observation operator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SystemDims;
use crate::numerics::ScalarField;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingKind {
    #[default]
    Orthogonal,
    RandomSign,
    Gaussian,
}

impl std::str::FromStr for TrainingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(Self::Orthogonal),
            "random-sign" => Ok(Self::RandomSign),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::invalid(format!("unknown training kind `{other}`"))),
        }
    }
}

/// The per-antenna training block `S` (`t_blocks x n_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDesign {
    pub s_block: DMatrix<C64>,
    pub kind: TrainingKind,
    pub field: ScalarField,
    pub seed: u64,
}

/// Sylvester Hadamard matrix; `n` must be a power of two.
pub fn hadamard(n: usize) -> DMatrix<f64> {
    assert!(n.is_power_of_two(), "hadamard size must be a power of two");
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    h
}

impl TrainingDesign {
    /// Generate a training block with `||S||_F^2 = n_t * t_blocks`.
    ///
    /// Orthogonal designs satisfy `S^H S = t_blocks * I`: Hadamard columns when
    /// `t_blocks` is a power of two, DFT columns in complex mode, and a scaled
    /// QR factor of a seeded Gaussian matrix otherwise.
    pub fn generate(dims: &SystemDims, kind: TrainingKind, field: ScalarField, seed: u64) -> Result<Self> {
        let (t, nt) = (dims.t_blocks, dims.n_t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_block = match kind {
            TrainingKind::Orthogonal => {
                if t < nt {
                    return Err(Error::invalid(format!(
                        "orthogonal training needs t_blocks >= n_t (got {t} < {nt})"
                    )));
                }
                if t.is_power_of_two() {
                    let h = hadamard(t);
                    DMatrix::from_fn(t, nt, |r, c| C64::new(h[(r, c)], 0.0))
                } else if field == ScalarField::Complex {
                    DMatrix::from_fn(t, nt, |r, c| C64::from_polar(1.0, -2.0 * PI * ((r * c) % t) as f64 / t as f64))
                } else {
                    let g = DMatrix::<f64>::from_fn(t, nt, |_, _| rng.sample(StandardNormal));
                    let qr = g.qr();
                    let q = qr.q();
                    let r = qr.r();
                    let scale = (t as f64).sqrt();
                    // Fix column signs so the result does not depend on the QR sign convention.
                    DMatrix::from_fn(t, nt, |a, c| {
                        let sign = if r[(c, c)] < 0.0 { -1.0 } else { 1.0 };
                        C64::new(q[(a, c)] * sign * scale, 0.0)
                    })
                }
            }
            TrainingKind::RandomSign => {
                let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
                match field {
                    ScalarField::Real => DMatrix::from_fn(t, nt, |_, _| C64::new(sign(), 0.0)),
                    ScalarField::Complex => {
                        let r = 0.5f64.sqrt();
                        DMatrix::from_fn(t, nt, |_, _| C64::new(sign() * r, sign() * r))
                    }
                }
            }
            TrainingKind::Gaussian => {
                let raw = match field {
                    ScalarField::Real => DMatrix::from_fn(t, nt, |_, _| C64::new(rng.sample(StandardNormal), 0.0)),
                    ScalarField::Complex => DMatrix::from_fn(t, nt, |_, _| {
                        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    }),
                };
                let scale = ((t * nt) as f64).sqrt() / raw.norm();
                raw * C64::new(scale, 0.0)
            }
        };
        Ok(Self {
            s_block,
            kind,
            field,
            seed,
        })
    }

    /// Wrap an explicit training block.
    pub fn from_matrix(s_block: DMatrix<C64>, kind: TrainingKind, field: ScalarField) -> Result<Self> {
        if s_block.nrows() == 0 || s_block.ncols() == 0 {
            return Err(Error::invalid("training block must be non-empty"));
        }
        if s_block.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("training block has non-finite entries"));
        }
        if field == ScalarField::Real && s_block.iter().any(|z| z.im != 0.0) {
            return Err(Error::invalid("real-mode training must have zero imaginary parts"));
        }
        let d = Self {
            s_block,
            kind,
            field,
            seed: 0,
        };
        if kind == TrainingKind::Orthogonal && d.orthogonality_error() > 1e-10 {
            return Err(Error::invalid("training marked orthogonal but S^H S is not a multiple of I"));
        }
        Ok(d)
    }

    pub fn t_blocks(&self) -> usize {
        self.s_block.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.s_block.ncols()
    }

    pub fn gram(&self) -> DMatrix<C64> {
        self.s_block.adjoint() * &self.s_block
    }

    /// `||S||_F^2` of one block.
    pub fn frobenius_sq(&self) -> f64 {
        self.s_block.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Relative distance of `S^H S` from `c I` with `c = trace / n_t`.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self.gram();
        let c = g.trace().re / self.n_t() as f64;
        if c <= 0.0 {
            return f64::INFINITY;
        }
        (g - DMatrix::<C64>::identity(self.n_t(), self.n_t()) * C64::new(c, 0.0)).norm() / c
    }

    pub(crate) fn check_dims(&self, dims: &SystemDims) -> Result<()> {
        if self.t_blocks() != dims.t_blocks || self.n_t() != dims.n_t {
            return Err(Error::dims(format!(
                "training block is {}x{}, system expects {}x{}",
                self.t_blocks(),
                self.n_t(),
                dims.t_blocks,
                dims.n_t
            )));
        }
        Ok(())
    }
}

/// Block-diagonal `diag(S, ..., S)` with one copy per receive antenna.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    block: DMatrix<C64>,
    n_blocks: usize,
    field: ScalarField,
}

pub fn build_observation_operator(training: &TrainingDesign, dims: &SystemDims) -> Result<ObservationOperator> {
    training.check_dims(dims)?;
    Ok(ObservationOperator {
        block: training.s_block.clone(),
        n_blocks: dims.n_r,
        field: training.field,
    })
}

impl ObservationOperator {
    pub fn nrows(&self) -> usize {
        self.n_blocks * self.block.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.n_blocks * self.block.ncols()
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn block(&self) -> &DMatrix<C64> {
        &self.block
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn apply(&self, x: &[C64]) -> Result<DVector<C64>> {
        if x.len() != self.ncols() {
            return Err(Error::dims(format!("operator expects length {}, got {}", self.ncols(), x.len())));
        }
        let (t, nt) = self.block.shape();
        let mut y = DVector::zeros(self.nrows());
        for i in 0..self.n_blocks {
            let xi = &x[i * nt..(i + 1) * nt];
            for tau in 0..t {
                let mut acc = C64::new(0.0, 0.0);
                for (j, xj) in xi.iter().enumerate() {
                    acc += self.block[(tau, j)] * xj;
                }
                y[i * t + tau] = acc;
            }
        }
        Ok(y)
    }

    /// Conjugate-transpose application.
    pub fn apply_adjoint(&self, y: &[C64]) -> Result<DVector<C64>> {
        if y.len() != self.nrows() {
            return Err(Error::dims(format!("adjoint expects length {}, got {}", self.nrows(), y.len())));
        }
        let (t, nt) = self.block.shape();
        let mut x = DVector::zeros(self.ncols());
        for i in 0..self.n_blocks {
            let yi = &y[i * t..(i + 1) * t];
            for j in 0..nt {
                let mut acc = C64::new(0.0, 0.0);
                for (tau, yt) in yi.iter().enumerate() {
                    acc += self.block[(tau, j)].conj() * yt;
                }
                x[i * nt + j] = acc;
            }
        }
        Ok(x)
    }

    /// Dense materialisation, for tests on small systems.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let (t, nt) = self.block.shape();
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for i in 0..self.n_blocks {
            m.view_mut((i * t, i * nt), (t, nt)).copy_from(&self.block);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_designs() {
        for (t, nt, field) in [
            (64, 64, ScalarField::Real),
            (8, 5, ScalarField::Real),
            (6, 4, ScalarField::Real),
            (6, 4, ScalarField::Complex),
            (3, 3, ScalarField::Real),
        ] {
            let dims = SystemDims::new(2, nt, t).unwrap();
            let s = TrainingDesign::generate(&dims, TrainingKind::Orthogonal, field, 7).unwrap();
            assert!(s.orthogonality_error() < 1e-10, "{t}x{nt}");
            assert!((s.frobenius_sq() - (t * nt) as f64).abs() < 1e-9);
        }
        let dims = SystemDims::new(1, 4, 3).unwrap();
        assert!(TrainingDesign::generate(&dims, TrainingKind::Orthogonal, ScalarField::Real, 0).is_err());
    }

    #[test]
    fn random_designs_have_target_energy() {
        let dims = SystemDims::new(1, 5, 7).unwrap();
        for kind in [TrainingKind::RandomSign, TrainingKind::Gaussian] {
            for field in [ScalarField::Real, ScalarField::Complex] {
                let s = TrainingDesign::generate(&dims, kind, field, 3).unwrap();
                assert!((s.frobenius_sq() - 35.0).abs() < 1e-9);
                assert_eq!(s, TrainingDesign::generate(&dims, kind, field, 3).unwrap());
            }
        }
    }

    #[test]
    fn single_block_operator_is_s() {
        let dims = SystemDims::new(1, 3, 4).unwrap();
        let s = TrainingDesign::generate(&dims, TrainingKind::Gaussian, ScalarField::Real, 1).unwrap();
        let op = build_observation_operator(&s, &dims).unwrap();
        assert_eq!(op.to_dense(), s.s_block);
        let wrong = SystemDims::new(1, 3, 5).unwrap();
        assert!(build_observation_operator(&s, &wrong).is_err());
    }

    #[test]
    fn identity_training_is_identity_operator() {
        let dims = SystemDims::new(3, 4, 4).unwrap();
        let s = TrainingDesign::from_matrix(DMatrix::identity(4, 4), TrainingKind::Orthogonal, ScalarField::Real)
            .unwrap();
        let op = build_observation_operator(&s, &dims).unwrap();
        assert_eq!(op.to_dense(), DMatrix::<C64>::identity(12, 12));
    }
}
