//! Additive model assembly: coefficient layout `θ = (β, b, u, c)`, design
//! rows `A(x, z) = (x, B_1(z_1), …, B_d(z_d))` and the block penalty.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pot::ExceedanceSample;
use crate::splines::{penalty_quadratic_form, KnotGrid, NormalizedBasis};

/// Largest log-scale that still exponentiates to a finite value.
pub const MAX_LOG_SCALE: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Linear covariates including the intercept.
    pub p: usize,
    /// Smooth covariates.
    pub d: usize,
    /// Interior knots `K`.
    pub knots: usize,
    /// Spline degree `ξ`.
    pub degree: usize,
    /// Penalty derivative order.
    pub m: usize,
    /// Shape smoothing parameter.
    pub lambda: f64,
    /// Scale smoothing parameter.
    pub nu: f64,
    /// Fit `(γ, log ς)` with `ς = σ(γ+1)` instead of `(γ, log σ)`.
    pub reparam: bool,
    /// Center non-intercept linear covariates at their training means.
    pub center_x: bool,
    /// Min–max rescale smooth covariates into `[0, 1]` instead of rejecting
    /// values outside it.
    pub rescale_z: bool,
}

impl ModelSpec {
    pub fn new(p: usize, d: usize, knots: usize) -> Self {
        Self {
            p,
            d,
            knots,
            degree: 3,
            m: 2,
            lambda: 1.0,
            nu: 1.0,
            reparam: false,
            center_x: true,
            rescale_z: false,
        }
    }

    /// `K = ⌈n^{1/(2m+1)}⌉`.
    pub fn default_knots(n: usize, m: usize) -> usize {
        ((n as f64).powf(1.0 / (2 * m + 1) as f64) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Validation("p must be at least 1 (intercept)".into()));
        }
        if self.d < 1 {
            return Err(Error::Validation("at least one smooth covariate is required".into()));
        }
        if self.knots < 1 {
            return Err(Error::Validation("number of interior knots must be >= 1".into()));
        }
        if self.m < 1 || self.m >= self.degree {
            return Err(Error::Validation(format!(
                "penalty order m = {} must satisfy 1 <= m < degree = {}",
                self.m, self.degree
            )));
        }
        if !(self.lambda >= 0.0) || !(self.nu >= 0.0) || !self.lambda.is_finite() || !self.nu.is_finite() {
            return Err(Error::Validation(format!(
                "smoothing parameters must be finite and >= 0, got lambda = {}, nu = {}",
                self.lambda, self.nu
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<KnotGrid> {
        KnotGrid::new(self.knots, self.degree)
    }

    /// `K + ξ`, the number of normalized bases per covariate.
    pub fn basis_len(&self) -> usize {
        self.knots + self.degree
    }

    /// Length of `(β, b)` (and of `(u, c)`): `p + d(K+ξ)`.
    pub fn block_len(&self) -> usize {
        self.p + self.d * self.basis_len()
    }

    pub fn theta_len(&self) -> usize {
        2 * self.block_len()
    }
}

/// Packed coefficient vector in the fixed order `(β, b, u, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    p: usize,
    d: usize,
    basis_len: usize,
    values: Vec<f64>,
}

impl Theta {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            p: spec.p,
            d: spec.d,
            basis_len: spec.basis_len(),
            values: vec![0.0; spec.theta_len()],
        }
    }

    pub fn from_vec(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.theta_len() {
            return Err(Error::Dimension(format!(
                "theta has length {}, expected {}",
                values.len(),
                spec.theta_len()
            )));
        }
        Ok(Self {
            p: spec.p,
            d: spec.d,
            basis_len: spec.basis_len(),
            values,
        })
    }

    fn block(&self) -> usize {
        self.p + self.d * self.basis_len
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `θ_γ = (β, b)`.
    pub fn gamma_part(&self) -> &[f64] {
        &self.values[..self.block()]
    }

    /// `θ_σ = (u, c)`.
    pub fn scale_part(&self) -> &[f64] {
        &self.values[self.block()..]
    }

    pub fn beta(&self) -> &[f64] {
        &self.values[..self.p]
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.values[..self.p]
    }

    pub fn b(&self) -> &[f64] {
        &self.values[self.p..self.block()]
    }

    pub fn u(&self) -> &[f64] {
        let s = self.block();
        &self.values[s..s + self.p]
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        let s = self.block();
        &mut self.values[s..s + self.p]
    }

    pub fn c(&self) -> &[f64] {
        &self.values[self.block() + self.p..]
    }

    /// Shape spline coefficients of covariate `j`.
    pub fn b_j(&self, j: usize) -> &[f64] {
        &self.b()[j * self.basis_len..(j + 1) * self.basis_len]
    }

    pub fn c_j(&self, j: usize) -> &[f64] {
        &self.c()[j * self.basis_len..(j + 1) * self.basis_len]
    }
}

/// `A(x, z) = (x, B_1(z_1), …, B_d(z_d))`, with `x` centered when configured.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub a: Vec<f64>,
}

impl DesignRow {
    pub fn dot(&self, coef: &[f64]) -> f64 {
        self.a.iter().zip(coef).map(|(a, c)| a * c).sum()
    }
}

/// Everything needed to turn raw covariates into design rows: per-covariate
/// normalized bases, x centering and optional z rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveBasis {
    pub bases: Vec<NormalizedBasis>,
    /// Centering offsets for `x` (0 for the intercept).
    pub x_means: Vec<f64>,
    /// `(min, max)` per smooth covariate when rescaling is enabled.
    pub z_ranges: Option<Vec<(f64, f64)>>,
}

impl AdditiveBasis {
    pub fn from_sample(spec: &ModelSpec, sample: &ExceedanceSample) -> Result<Self> {
        spec.validate()?;
        if sample.p() != spec.p || sample.d() != spec.d {
            return Err(Error::Schema(format!(
                "model expects p = {}, d = {} but the sample has p = {}, d = {}",
                spec.p,
                spec.d,
                sample.p(),
                sample.d()
            )));
        }
        let n = sample.n() as f64;
        let mut x_means = vec![0.0; spec.p];
        if spec.center_x {
            for row in &sample.x {
                for k in 1..spec.p {
                    x_means[k] += row[k];
                }
            }
            x_means.iter_mut().for_each(|v| *v /= n);
        }
        let z_ranges = if spec.rescale_z {
            let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); spec.d];
            for row in &sample.z {
                for (r, v) in ranges.iter_mut().zip(row) {
                    r.0 = r.0.min(*v);
                    r.1 = r.1.max(*v);
                }
            }
            if let Some(j) = ranges.iter().position(|r| !(r.1 > r.0)) {
                return Err(Error::DegenerateSample(format!(
                    "smooth covariate z_{} is constant and cannot be rescaled",
                    j + 1
                )));
            }
            Some(ranges)
        } else {
            None
        };
        let grid = spec.grid()?;
        let mut out = Self {
            bases: Vec::with_capacity(spec.d),
            x_means,
            z_ranges,
        };
        for j in 0..spec.d {
            let zs = sample
                .z
                .iter()
                .map(|row| out.transform_z(j, row[j]))
                .collect::<Result<Vec<_>>>()?;
            out.bases.push(NormalizedBasis::build(&grid, &zs)?);
        }
        Ok(out)
    }

    /// Maps covariate `j` into `[0, 1]` (rescaling if configured).
    pub fn transform_z(&self, j: usize, z: f64) -> Result<f64> {
        let v = match &self.z_ranges {
            Some(r) => {
                let (lo, hi) = r[j];
                ((z - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
            None => z,
        };
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain {
                what: "z",
                value: z,
                domain: "[0, 1] (enable z rescaling to accept other ranges)",
            });
        }
        Ok(v)
    }

    pub fn basis_len(&self) -> usize {
        self.bases.first().map_or(0, NormalizedBasis::len)
    }

    pub fn block_len(&self) -> usize {
        self.x_means.len() + self.bases.len() * self.basis_len()
    }

    /// Writes `A(x, z)` into `out`; `x` includes the intercept.
    pub fn design_row_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.x_means.len();
        if x.len() != p || z.len() != self.bases.len() {
            return Err(Error::Dimension(format!(
                "design row needs {} x values and {} z values, got {} and {}",
                p,
                self.bases.len(),
                x.len(),
                z.len()
            )));
        }
        if x[0] != 1.0 {
            return Err(Error::Validation(format!(
                "first linear covariate must be the intercept 1, got {}",
                x[0]
            )));
        }
        for k in 0..p {
            out[k] = x[k] - self.x_means[k];
        }
        let len = self.basis_len();
        for (j, basis) in self.bases.iter().enumerate() {
            let zj = self.transform_z(j, z[j])?;
            basis.eval_into(zj, &mut out[p + j * len..p + (j + 1) * len])?;
        }
        Ok(())
    }

    pub fn design_row(&self, x: &[f64], z: &[f64]) -> Result<DesignRow> {
        let mut a = vec![0.0; self.block_len()];
        self.design_row_into(x, z, &mut a)?;
        Ok(DesignRow { a })
    }

    /// `n × (p + d(K+ξ))` matrix of design rows.
    pub fn design_matrix(&self, sample: &ExceedanceSample) -> Result<DMatrix<f64>> {
        let q = self.block_len();
        let mut out = DMatrix::zeros(sample.n(), q);
        let mut row = vec![0.0; q];
        for i in 0..sample.n() {
            self.design_row_into(&sample.x[i], &sample.z[i], &mut row)?;
            for (k, v) in row.iter().enumerate() {
                out[(i, k)] = *v;
            }
        }
        Ok(out)
    }
}

/// `A(x, z)` for raw covariates; `x[0]` must be 1.
pub fn build_design_row(
    _spec: &ModelSpec,
    basis: &AdditiveBasis,
    x: &[f64],
    z: &[f64],
) -> Result<DesignRow> {
    basis.design_row(x, z)
}

/// `γ = A(x,z)ᵀ θ_γ` and `scale = exp(A(x,z)ᵀ θ_σ)`, where the scale is `σ`
/// or `ς` depending on `spec.reparam`.
pub fn eval_model(
    spec: &ModelSpec,
    basis: &AdditiveBasis,
    theta: &Theta,
    x: &[f64],
    z: &[f64],
) -> Result<(f64, f64)> {
    let row = build_design_row(spec, basis, x, z)?;
    let gamma = row.dot(theta.gamma_part());
    let eta = row.dot(theta.scale_part());
    if eta > MAX_LOG_SCALE {
        return Err(Error::ScaleOverflow { eta });
    }
    Ok((gamma, eta.exp()))
}

/// Block-diagonal penalty `Ω_{γ,σ}` such that
/// `θᵀ Ω_{γ,σ} θ = λ Σ_j ∫ (ḡ_j^{(m)})² + ν Σ_j ∫ (s̄_j^{(m)})²`.
pub fn build_penalty_block(spec: &ModelSpec, basis: &AdditiveBasis) -> Result<DMatrix<f64>> {
    let q = spec.block_len();
    let len = spec.basis_len();
    let mut omega = DMatrix::zeros(2 * q, 2 * q);
    if spec.lambda == 0.0 && spec.nu == 0.0 {
        return Ok(omega);
    }
    for (j, b) in basis.bases.iter().enumerate() {
        let pj = penalty_quadratic_form(b, spec.m)?;
        let off_b = spec.p + j * len;
        let off_c = q + spec.p + j * len;
        for r in 0..len {
            for c in 0..len {
                omega[(off_b + r, off_b + c)] = spec.lambda * pj[(r, c)];
                omega[(off_c + r, off_c + c)] = spec.nu * pj[(r, c)];
            }
        }
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, p: usize, d: usize) -> ExceedanceSample {
        let x = (0..n)
            .map(|i| (1..p).map(|k| ((i * 31 + k * 17) % 97) as f64 / 48.5 - 1.0).collect())
            .collect();
        let z = (0..n)
            .map(|i| (0..d).map(|j| ((i * (13 + j) + 5 * j) % n) as f64 / n as f64 + 0.5 / n as f64).collect())
            .collect();
        ExceedanceSample::from_exceedances(vec![1.0; n], x, z).unwrap()
    }

    #[test]
    fn default_knots_rule() {
        assert_eq!(ModelSpec::default_knots(500, 2), 4);
        assert_eq!(ModelSpec::default_knots(4000, 2), 6);
        assert_eq!(ModelSpec::default_knots(8000, 2), 7);
        assert_eq!(ModelSpec::default_knots(32, 2), 2);
    }

    #[test]
    fn spec_validation() {
        let mut s = ModelSpec::new(1, 1, 0);
        assert!(s.validate().is_err());
        s.knots = 3;
        assert!(s.validate().is_ok());
        s.m = 3;
        assert!(s.validate().is_err());
        s.m = 2;
        s.lambda = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn design_row_concatenation() {
        let spec = ModelSpec::new(1, 1, 4);
        let smp = sample(200, 1, 1);
        let basis = AdditiveBasis::from_sample(&spec, &smp).unwrap();
        let row = build_design_row(&spec, &basis, &[1.0], &[0.0]).unwrap();
        let mut expected = vec![1.0];
        expected.extend(basis.bases[0].eval(0.0).unwrap());
        assert_eq!(row.a, expected);
        assert!(build_design_row(&spec, &basis, &[1.0], &[1.2]).is_err());
        assert!(build_design_row(&spec, &basis, &[2.0], &[0.2]).is_err());
    }

    #[test]
    fn eval_model_basics() {
        let spec = ModelSpec::new(2, 2, 3);
        let smp = sample(300, 2, 2);
        let basis = AdditiveBasis::from_sample(&spec, &smp).unwrap();
        let mut theta = Theta::zeros(&spec);
        let (g, s) = eval_model(&spec, &basis, &theta, &[1.0, 0.3], &[0.2, 0.7]).unwrap();
        assert_eq!((g, s), (0.0, 1.0));
        theta.beta_mut()[0] = 0.5;
        let (g, s) = eval_model(&spec, &basis, &theta, &[1.0, 0.3], &[0.2, 0.7]).unwrap();
        assert!((g - (0.5)).abs() < 1e-15 && s == 1.0);
        theta.u_mut()[0] = 800.0;
        assert!(matches!(
            eval_model(&spec, &basis, &theta, &[1.0, 0.3], &[0.2, 0.7]),
            Err(Error::ScaleOverflow { .. })
        ));
    }

    #[test]
    fn theta_layout() {
        let spec = ModelSpec::new(2, 2, 3);
        let vals: Vec<f64> = (0..spec.theta_len()).map(|v| v as f64).collect();
        let t = Theta::from_vec(&spec, vals).unwrap();
        assert_eq!(t.len(), 2 * (2 + 2 * 6));
        assert_eq!(t.beta(), &[0.0, 1.0]);
        assert_eq!(t.b_j(1)[0], 8.0);
        assert_eq!(t.u(), &[14.0, 15.0]);
        assert_eq!(t.c_j(0)[0], 16.0);
        assert_eq!(t.c().len(), 12);
        assert!(Theta::from_vec(&spec, vec![0.0; 3]).is_err());
    }

    #[test]
    fn penalty_block_zero_and_psd() {
        let mut spec = ModelSpec::new(2, 2, 5);
        let smp = sample(400, 2, 2);
        let basis = AdditiveBasis::from_sample(&spec, &smp).unwrap();
        spec.lambda = 0.0;
        spec.nu = 0.0;
        assert_eq!(build_penalty_block(&spec, &basis).unwrap().amax(), 0.0);
        spec.lambda = 2.0;
        spec.nu = 0.5;
        let om = build_penalty_block(&spec, &basis).unwrap();
        assert!((&om - om.transpose()).amax() < 1e-12 * om.amax());
        let eig = om.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * om.amax());
        // linear blocks unpenalized
        for k in 0..spec.p {
            assert_eq!(om.row(k).amax(), 0.0);
            assert_eq!(om.row(spec.block_len() + k).amax(), 0.0);
        }
    }

    #[test]
    fn centering_of_x() {
        let spec = ModelSpec::new(2, 1, 3);
        let smp = sample(100, 2, 1);
        let basis = AdditiveBasis::from_sample(&spec, &smp).unwrap();
        let mean = smp.x.iter().map(|r| r[1]).sum::<f64>() / 100.0;
        assert!((basis.x_means[1] - mean).abs() < 1e-15);
        let mut raw = spec.clone();
        raw.center_x = false;
        let basis = AdditiveBasis::from_sample(&raw, &smp).unwrap();
        assert_eq!(basis.x_means, vec![0.0, 0.0]);
    }

    #[test]
    fn rescaling_of_z() {
        let mut spec = ModelSpec::new(1, 1, 3);
        let mut smp = sample(100, 1, 1);
        for r in smp.z.iter_mut() {
            r[0] = 10.0 + 5.0 * r[0];
        }
        assert!(AdditiveBasis::from_sample(&spec, &smp).is_err());
        spec.rescale_z = true;
        let basis = AdditiveBasis::from_sample(&spec, &smp).unwrap();
        let (lo, hi) = basis.z_ranges.as_ref().unwrap()[0];
        assert!((basis.transform_z(0, lo).unwrap()).abs() < 1e-15);
        assert!((basis.transform_z(0, hi).unwrap() - 1.0).abs() < 1e-15);
    }
}
