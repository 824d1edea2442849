//! Least squares, Gaussian densities and log-domain probability helpers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Clamp applied to every probability produced from a log-ratio.
pub const PROB_EPS: f64 = 1e-12;

/// Whether the model runs over real or complex scalars.
///
/// Real mode stores everything in `Complex64` with zero imaginary parts; the
/// only behavioural difference is the noise density (real Gaussian vs.
/// circularly-symmetric complex Gaussian) and the noise generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    #[default]
    Real,
    Complex,
}

/// Least-squares solution with its rank and per-coefficient variances.
#[derive(Debug, Clone)]
pub struct LsSolution {
    pub estimate: DVector<C64>,
    pub residual_norm: f64,
    pub rank: usize,
    /// `noise_var * diag((A^H A)^+)`.
    pub covariance_diag: DVector<f64>,
}

/// SVD-based pseudo-inverse of a fixed matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct LsFactor {
    a: DMatrix<C64>,
    pinv: DMatrix<C64>,
    gram_pinv_diag: DVector<f64>,
    rank: usize,
}

impl LsFactor {
    pub fn new(a: &DMatrix<C64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::invalid("least-squares matrix must be non-empty"));
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("least-squares matrix has non-finite entries"));
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().expect("svd computed with u");
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let sv = &svd.singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let tol = m.max(n) as f64 * f64::EPSILON * smax;

        let mut pinv = DMatrix::<C64>::zeros(n, m);
        let mut gram_pinv_diag = DVector::<f64>::zeros(n);
        let mut rank = 0;
        for (k, &s) in sv.iter().enumerate() {
            if s <= tol || s == 0.0 {
                continue;
            }
            rank += 1;
            let inv = 1.0 / s;
            // V[:, k] = conj(v_t[k, :])
            for j in 0..n {
                let vjk = v_t[(k, j)].conj();
                gram_pinv_diag[j] += vjk.norm_sqr() * inv * inv;
                let scaled = vjk * inv;
                for r in 0..m {
                    pinv[(j, r)] += scaled * u[(r, k)].conj();
                }
            }
        }
        Ok(Self {
            a: a.clone(),
            pinv,
            gram_pinv_diag,
            rank,
        })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn pinv(&self) -> &DMatrix<C64> {
        &self.pinv
    }

    /// `diag((A^H A)^+)`.
    pub fn gram_pinv_diag(&self) -> &DVector<f64> {
        &self.gram_pinv_diag
    }

    /// Minimum-norm least-squares estimate `A^+ y`.
    pub fn apply(&self, y: &[C64]) -> Result<DVector<C64>> {
        if y.len() != self.rows() {
            return Err(Error::dims(format!(
                "right-hand side has length {}, matrix has {} rows",
                y.len(),
                self.rows()
            )));
        }
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("right-hand side has non-finite entries"));
        }
        let mut x = DVector::<C64>::zeros(self.cols());
        for (j, xj) in x.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (r, yr) in y.iter().enumerate() {
                acc += self.pinv[(j, r)] * yr;
            }
            *xj = acc;
        }
        Ok(x)
    }

    pub fn solve(&self, y: &[C64], noise_var: f64) -> Result<LsSolution> {
        let estimate = self.apply(y)?;
        let fitted = &self.a * &estimate;
        let residual_norm = y
            .iter()
            .zip(fitted.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        Ok(LsSolution {
            estimate,
            residual_norm,
            rank: self.rank,
            covariance_diag: &self.gram_pinv_diag * noise_var,
        })
    }
}

/// `argmin ||y - A x||` with minimum-norm tie-breaking.
pub fn solve_ls(a: &DMatrix<C64>, y: &[C64], noise_var: f64) -> Result<LsSolution> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance {noise_var} must be finite and >= 0")));
    }
    LsFactor::new(a)?.solve(y, noise_var)
}

fn check_var(variance: f64) -> Result<()> {
    if variance > 0.0 && variance.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("variance {variance} must be positive")))
    }
}

pub fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    log_gaussian_pdf(x, mean, variance).map(f64::exp)
}

pub fn log_gaussian_pdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    check_var(variance)?;
    let d = x - mean;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * variance).ln() - d * d / (2.0 * variance))
}

/// Log density of a real Gaussian evaluated at a complex residual, using
/// `|x - mean|^2` in place of the square.
pub fn log_gaussian_pdf_c(x: C64, mean: C64, variance: f64) -> Result<f64> {
    check_var(variance)?;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (x - mean).norm_sqr() / (2.0 * variance))
}

/// Circularly-symmetric complex Gaussian log density with total variance `variance`.
pub fn log_circular_gaussian_pdf(x: C64, mean: C64, variance: f64) -> Result<f64> {
    check_var(variance)?;
    Ok(-(std::f64::consts::PI * variance).ln() - (x - mean).norm_sqr() / variance)
}

/// `log f(r0 | v0) - log f(r1 | v1)` given squared residual magnitudes.
///
/// Normalising constants cancel, which is why this is cheaper than two
/// density calls. Variances must be positive.
#[inline]
pub fn log_density_gap(field: ScalarField, r0_sq: f64, v0: f64, r1_sq: f64, v1: f64) -> f64 {
    match field {
        ScalarField::Real => 0.5 * (v1 / v0).ln() - 0.5 * r0_sq / v0 + 0.5 * r1_sq / v1,
        ScalarField::Complex => (v1 / v0).ln() - r0_sq / v0 + r1_sq / v1,
    }
}

/// `1 / (1 + exp(log_ratio))`, clamped to `[PROB_EPS, 1 - PROB_EPS]`.
///
/// `log_ratio` is `ln(P(b = 0) / P(b = 1))`.
#[inline]
pub fn bernoulli_from_lr(log_ratio: f64) -> f64 {
    let p = if log_ratio > 0.0 {
        let e = (-log_ratio).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + log_ratio.exp())
    };
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Inverse of [`bernoulli_from_lr`]: `ln((1 - p) / p)`.
#[inline]
pub fn lr_from_prob(p: f64) -> f64 {
    (1.0 - p).ln() - p.ln()
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// Convert a real matrix to complex storage.
pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_ls() {
        let a = DMatrix::<C64>::identity(3, 3);
        let y = [c(1.0), C64::new(-2.0, 0.5), c(3.0)];
        let s = solve_ls(&a, &y, 1.0).unwrap();
        for k in 0..3 {
            assert!((s.estimate[k] - y[k]).norm() < 1e-14);
        }
        assert!(s.residual_norm < 1e-14);
        assert_eq!(s.rank, 3);
    }

    #[test]
    fn zero_column_gets_zero_coefficient() {
        let a = DMatrix::from_row_slice(3, 2, &[c(1.0), c(0.0), c(2.0), c(0.0), c(-1.0), c(0.0)]);
        let y = [c(1.0), c(2.0), c(3.0)];
        let s = solve_ls(&a, &y, 1.0).unwrap();
        assert_eq!(s.rank, 1);
        assert_eq!(s.estimate[1], c(0.0));
        assert_eq!(s.covariance_diag[1], 0.0);
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_element(2, 2, c(f64::NAN));
        assert!(matches!(solve_ls(&a, &[c(0.0), c(0.0)], 1.0), Err(Error::InvalidArgument(_))));
        let a = DMatrix::<C64>::identity(2, 2);
        assert!(solve_ls(&a, &[c(f64::INFINITY), c(0.0)], 1.0).is_err());
    }

    #[test]
    fn density_examples() {
        let v = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((gaussian_pdf(0.3, 0.3, v).unwrap() - 1.0).abs() < 1e-14);
        let sigma: f64 = 0.7;
        let want = (-0.5f64).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
        assert!((gaussian_pdf(1.0 + sigma, 1.0, sigma * sigma).unwrap() - want).abs() < 1e-14);
        assert!((log_gaussian_pdf(5.0, 0.0, 1.0).unwrap() + 13.418_938_533).abs() < 1e-8);
        assert!(gaussian_pdf(0.0, 0.0, 0.0).is_err());
        assert!(log_gaussian_pdf(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn gap_matches_density_difference() {
        let (y, e, v, sh, vh) = (C64::new(0.4, -1.1), C64::new(0.1, 0.2), 0.8, C64::new(-0.5, 0.3), 0.25);
        let real = log_gaussian_pdf_c(y, e, v).unwrap() - log_gaussian_pdf_c(y, e + sh, v + vh).unwrap();
        let gap = log_density_gap(ScalarField::Real, (y - e).norm_sqr(), v, (y - e - sh).norm_sqr(), v + vh);
        assert!((real - gap).abs() < 1e-13);
        let cplx = log_circular_gaussian_pdf(y, e, v).unwrap()
            - log_circular_gaussian_pdf(y, e + sh, v + vh).unwrap();
        let gap = log_density_gap(ScalarField::Complex, (y - e).norm_sqr(), v, (y - e - sh).norm_sqr(), v + vh);
        assert!((cplx - gap).abs() < 1e-13);
    }

    #[test]
    fn bernoulli_examples() {
        assert_eq!(bernoulli_from_lr(0.0), 0.5);
        assert_eq!(bernoulli_from_lr(f64::INFINITY), PROB_EPS);
        assert_eq!(bernoulli_from_lr(f64::NEG_INFINITY), 1.0 - PROB_EPS);
        assert!((bernoulli_from_lr(3f64.ln()) - 0.25).abs() < 1e-15);
        assert!((lr_from_prob(0.25) - 3f64.ln()).abs() < 1e-15);
    }
}
