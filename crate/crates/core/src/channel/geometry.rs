//! Array responses, the geometric multipath channel and the DFT beamspace map.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::SystemDims;
use crate::{Error, Result, C64};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: C64,
    /// Angle of departure, radians in `[0, 2pi)`.
    pub aod: f64,
    /// Angle of arrival, radians in `[0, 2pi)`.
    pub aoa: f64,
    pub path_loss: f64,
    pub wavelength: f64,
    pub spacing: f64,
}

impl PathParams {
    pub fn new(gain: C64, aod: f64, aoa: f64, path_loss: f64, wavelength: f64, spacing: f64) -> Result<Self> {
        let p = Self {
            gain,
            aod,
            aoa,
            path_loss,
            wavelength,
            spacing,
        };
        p.validate()?;
        Ok(p)
    }

    /// Half-wavelength spacing, unit wavelength, unit path loss.
    pub fn half_wavelength(gain: C64, aod: f64, aoa: f64) -> Result<Self> {
        Self::new(gain, aod, aoa, 1.0, 1.0, 0.5)
    }

    fn validate(&self) -> Result<()> {
        let angle_ok = |a: f64| (0.0..2.0 * PI).contains(&a);
        if !angle_ok(self.aod) || !angle_ok(self.aoa) {
            return Err(Error::invalid("path angles must lie in [0, 2pi)"));
        }
        if !(self.path_loss > 0.0) || !(self.wavelength > 0.0) || !(self.spacing > 0.0) {
            return Err(Error::invalid("path loss, wavelength and spacing must be positive"));
        }
        if !self.gain.re.is_finite() || !self.gain.im.is_finite() {
            return Err(Error::invalid("path gain must be finite"));
        }
        Ok(())
    }
}

/// Unit-norm ULA steering vector `exp(j k (2 pi d / lambda) sin(angle)) / sqrt(n)`.
pub fn array_response(angle: f64, n: usize, wavelength: f64, spacing: f64) -> Result<DVector<C64>> {
    if n == 0 {
        return Err(Error::invalid("array size must be at least 1"));
    }
    if !(wavelength > 0.0) || !(spacing > 0.0) {
        return Err(Error::invalid("wavelength and spacing must be positive"));
    }
    let phase = 2.0 * PI * spacing / wavelength * angle.sin();
    let norm = 1.0 / (n as f64).sqrt();
    Ok(DVector::from_fn(n, |k, _| C64::from_polar(norm, k as f64 * phase)))
}

/// Sum of rank-one path contributions, `A_r diag(g) A_t^H` with
/// `g = sqrt(n_r n_t / path_loss) * gains`.
pub fn geometric_channel(dims: &SystemDims, paths: &[PathParams]) -> Result<DMatrix<C64>> {
    let first = paths
        .first()
        .ok_or_else(|| Error::invalid("geometric channel needs at least one path"))?;
    for p in paths {
        p.validate()?;
        if p.wavelength != first.wavelength || p.spacing != first.spacing || p.path_loss != first.path_loss {
            return Err(Error::invalid("all paths must share wavelength, spacing and path loss"));
        }
    }
    let scale = ((dims.n_r * dims.n_t) as f64 / first.path_loss).sqrt();
    let mut h = DMatrix::<C64>::zeros(dims.n_r, dims.n_t);
    for p in paths {
        let ar = array_response(p.aoa, dims.n_r, p.wavelength, p.spacing)?;
        let at = array_response(p.aod, dims.n_t, p.wavelength, p.spacing)?;
        h += ar * at.adjoint() * (p.gain * scale);
    }
    Ok(h)
}

/// Angle in `[0, 2pi)` whose steering vector equals DFT column `k` of size `n`.
pub fn grid_angle(k: usize, n: usize, wavelength: f64, spacing: f64) -> Result<f64> {
    if n == 0 || k >= n {
        return Err(Error::invalid(format!("beam index {k} out of range for {n} elements")));
    }
    if !(wavelength > 0.0) || !(spacing > 0.0) {
        return Err(Error::invalid("wavelength and spacing must be positive"));
    }
    let mut frac = k as f64 / n as f64;
    if frac >= 0.5 {
        frac -= 1.0;
    }
    let s = frac * wavelength / spacing;
    if s.abs() > 1.0 {
        return Err(Error::invalid(format!("beam {k} is not steerable with this spacing")));
    }
    let a = s.asin();
    Ok(if a < 0.0 { a + 2.0 * PI } else { a })
}

/// Unitary DFT matrix, `W[a, k] = exp(+j 2 pi a k / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> DMatrix<C64> {
    let norm = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |a, k| {
        let ph = 2.0 * PI * ((a * k) % n) as f64 / n as f64;
        C64::from_polar(norm, ph)
    })
}

/// `||W^H W - I||_F`.
pub fn unitarity_error(w: &DMatrix<C64>) -> f64 {
    let g = w.adjoint() * w;
    (g - DMatrix::<C64>::identity(w.ncols(), w.ncols())).norm()
}

/// Receive and transmit beam bases.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualBasis {
    pub w_r: DMatrix<C64>,
    pub w_t: DMatrix<C64>,
}

impl VirtualBasis {
    pub fn new(w_r: DMatrix<C64>, w_t: DMatrix<C64>) -> Result<Self> {
        for (name, w) in [("w_r", &w_r), ("w_t", &w_t)] {
            if !w.is_square() {
                return Err(Error::dims(format!("{name} must be square")));
            }
            if unitarity_error(w) > 1e-10 {
                return Err(Error::invalid(format!("{name} is not unitary")));
            }
        }
        Ok(Self { w_r, w_t })
    }

    pub fn dft(dims: &SystemDims) -> Self {
        Self {
            w_r: dft_matrix(dims.n_r),
            w_t: dft_matrix(dims.n_t),
        }
    }

    pub fn identity(dims: &SystemDims) -> Self {
        Self {
            w_r: DMatrix::identity(dims.n_r, dims.n_r),
            w_t: DMatrix::identity(dims.n_t, dims.n_t),
        }
    }

    fn check(&self, m: &DMatrix<C64>) -> Result<()> {
        if m.nrows() != self.w_r.nrows() || m.ncols() != self.w_t.nrows() {
            return Err(Error::dims(format!(
                "channel is {}x{}, basis expects {}x{}",
                m.nrows(),
                m.ncols(),
                self.w_r.nrows(),
                self.w_t.nrows()
            )));
        }
        Ok(())
    }
}

/// `W_r^H H W_t`.
pub fn virtual_map(h: &DMatrix<C64>, basis: &VirtualBasis) -> Result<DMatrix<C64>> {
    basis.check(h)?;
    Ok(basis.w_r.adjoint() * h * &basis.w_t)
}

/// `W_r H_v W_t^H`.
pub fn inverse_virtual_map(h_v: &DMatrix<C64>, basis: &VirtualBasis) -> Result<DMatrix<C64>> {
    basis.check(h_v)?;
    Ok(&basis.w_r * h_v * basis.w_t.adjoint())
}
