//! Plug-in asymptotic covariances and pointwise confidence intervals.
//!
//! For a fitted model with penalized Hessian `H`, the covariance of
//! `(γ̂(x,z), log ŝ(x,z))` is `D(x,z)ᵀ H⁻¹ D(x,z)` with
//! `D = diag(A(x,z), A(x,z))`, i.e. `D ᵀ Σ̂⁻¹ D / n` for the per-observation
//! Hessian `Σ̂ = H/n`. Intervals are variance-only: the smoothing and
//! tail-approximation biases are not estimated.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{eval_model, AdditiveBasis, DesignRow, ModelSpec};
use crate::error::{Error, Result};
use crate::fitter::FitResult;
use crate::pot::ExceedanceSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCI {
    pub gamma_hat: f64,
    /// `σ̂` for the plain family, `ς̂` for the orthogonal one.
    pub scale_hat: f64,
    pub se_gamma: f64,
    /// Standard error of `ŝ/s − 1` (equivalently of `log ŝ`).
    pub se_scale_rel: f64,
    pub level: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
}

/// Cholesky factor of the penalized Hessian, reused across points.
pub struct HessianInverse {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl HessianInverse {
    pub fn new(fit: &FitResult) -> Result<Self> {
        let h = &fit.penalized_hessian;
        match h.clone().cholesky() {
            Some(chol) => Ok(Self { chol }),
            None => Err(Error::InferenceUnavailable {
                min_eigenvalue: h.clone().symmetric_eigenvalues().min(),
            }),
        }
    }

    /// `D(x,z)ᵀ H⁻¹ D(x,z)` for a design row `A(x,z)`.
    pub fn point_covariance(&self, row: &DesignRow) -> Matrix2<f64> {
        let q = row.a.len();
        let mut d = DMatrix::zeros(2 * q, 2);
        for (k, v) in row.a.iter().enumerate() {
            d[(k, 0)] = *v;
            d[(q + k, 1)] = *v;
        }
        let solved = self.chol.solve(&d);
        let cov = d.transpose() * solved;
        let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        Matrix2::new(cov[(0, 0)], off, off, cov[(1, 1)])
    }
}

/// Covariance of `(γ̂(x,z), log ŝ(x,z))`.
pub fn asymptotic_covariance(
    fit: &FitResult,
    _spec: &ModelSpec,
    basis: &AdditiveBasis,
    x: &[f64],
    z: &[f64],
) -> Result<Matrix2<f64>> {
    let inv = HessianInverse::new(fit)?;
    Ok(inv.point_covariance(&basis.design_row(x, z)?))
}

/// Inverse of the empirical `Σ̂_{β,u}` (or of its block-diagonal orthogonal
/// analogue), the asymptotic covariance of `√n (β̂ − β, û − u)`.
pub fn parametric_covariance(
    fit: &FitResult,
    spec: &ModelSpec,
    basis: &AdditiveBasis,
    sample: &ExceedanceSample,
) -> Result<DMatrix<f64>> {
    let p = spec.p;
    let mut sigma = DMatrix::zeros(2 * p, 2 * p);
    let n = sample.n() as f64;
    for i in 0..sample.n() {
        let row = basis.design_row(&sample.x[i], &sample.z[i])?;
        let gamma = row.dot(fit.theta.gamma_part());
        if !(gamma > -0.5) {
            return Err(Error::NonExistence { gamma });
        }
        let (wgg, wgs, wss) = if spec.reparam {
            (1.0 / (gamma + 1.0).powi(2), 0.0, 1.0 / (2.0 * gamma + 1.0))
        } else {
            let a = 1.0 / (2.0 * gamma + 1.0);
            (2.0 * a / (gamma + 1.0), a / (gamma + 1.0), a)
        };
        let x = &row.a[..p];
        for r in 0..p {
            for c in 0..p {
                let xx = x[r] * x[c] / n;
                sigma[(r, c)] += wgg * xx;
                sigma[(r, p + c)] += wgs * xx;
                sigma[(p + r, c)] += wgs * xx;
                sigma[(p + r, p + c)] += wss * xx;
            }
        }
    }
    sigma.clone().try_inverse().ok_or(Error::InferenceUnavailable {
        min_eigenvalue: sigma.symmetric_eigenvalues().min(),
    })
}

/// Two-sided normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 * (1.0 + level)))
}

/// Builds the interval from point estimates and a covariance of
/// `(γ̂, log ŝ)`.
pub fn interval_from(gamma_hat: f64, scale_hat: f64, cov: &Matrix2<f64>, level: f64) -> Result<PointwiseCI> {
    let zq = normal_quantile(level)?;
    let se_gamma = cov[(0, 0)].max(0.0).sqrt();
    let se_scale_rel = cov[(1, 1)].max(0.0).sqrt();
    Ok(PointwiseCI {
        gamma_hat,
        scale_hat,
        se_gamma,
        se_scale_rel,
        level,
        gamma_lo: gamma_hat - zq * se_gamma,
        gamma_hi: gamma_hat + zq * se_gamma,
        scale_lo: scale_hat * (-zq * se_scale_rel).exp(),
        scale_hi: scale_hat * (zq * se_scale_rel).exp(),
    })
}

/// Normal-approximation interval for `γ(x,z)`; the scale interval is built
/// on the log scale and exponentiated.
pub fn pointwise_ci(
    fit: &FitResult,
    spec: &ModelSpec,
    basis: &AdditiveBasis,
    x: &[f64],
    z: &[f64],
    level: f64,
) -> Result<PointwiseCI> {
    normal_quantile(level)?;
    let (gamma, scale) = eval_model(spec, basis, &fit.theta, x, z)?;
    let cov = asymptotic_covariance(fit, spec, basis, x, z)?;
    interval_from(gamma, scale, &cov, level)
}

/// Row-wise standardized view used by the experiments.
pub fn standardized(estimate: f64, truth: f64, se: f64) -> f64 {
    (estimate - truth) / se
}

/// `γ̂` at every training observation.
pub fn fitted_shapes(fit: &FitResult, basis: &AdditiveBasis, sample: &ExceedanceSample) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(sample.n());
    for i in 0..sample.n() {
        out[i] = basis.design_row(&sample.x[i], &sample.z[i])?.dot(fit.theta.gamma_part());
    }
    Ok(out)
}
