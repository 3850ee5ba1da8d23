//! Clamped equidistant B-spline bases on `[0, 1]`, the normalized (centered,
//! unit-RMS) recombination used for identifiable additive components, and the
//! roughness-penalty algebra built from difference and Gram matrices.
//!
//! Raw bases are indexed `0..=K+ξ`; normalized bases are indexed `1..=K+ξ`
//! and stored at positions `0..K+ξ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knot sequence `κ_{-ξ} ≤ … ≤ κ_{K+ξ+1}` with `K` equidistant interior
/// knots and boundary knots repeated so that `κ_{-ξ} = … = κ_0 = 0` and
/// `κ_{K+1} = … = κ_{K+ξ+1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct KnotGrid {
    interior: usize,
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridParams {
    interior: usize,
    degree: usize,
}

impl TryFrom<GridParams> for KnotGrid {
    type Error = Error;
    fn try_from(p: GridParams) -> Result<Self> {
        KnotGrid::new(p.interior, p.degree)
    }
}

impl From<KnotGrid> for GridParams {
    fn from(g: KnotGrid) -> Self {
        GridParams {
            interior: g.interior,
            degree: g.degree,
        }
    }
}

impl KnotGrid {
    pub fn new(interior: usize, degree: usize) -> Result<Self> {
        if interior > 100_000 || degree > 20 {
            return Err(Error::Dimension(format!(
                "knot grid K = {interior}, degree = {degree} is unreasonably large"
            )));
        }
        let cells = (interior + 1) as f64;
        let mut knots = Vec::with_capacity(interior + 2 * degree + 2);
        knots.extend(std::iter::repeat(0.0).take(degree));
        for j in 0..=interior + 1 {
            knots.push(j as f64 / cells);
        }
        knots.extend(std::iter::repeat(1.0).take(degree));
        Ok(Self {
            interior,
            degree,
            knots,
        })
    }

    /// Number of interior knots `K`.
    pub fn interior(&self) -> usize {
        self.interior
    }

    /// Spline degree `ξ`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Full knot vector; entry `i` holds `κ_{i-ξ}`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of raw bases, `K + ξ + 1`.
    pub fn num_basis(&self) -> usize {
        self.interior + self.degree + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.interior + 1) as f64
    }

    /// The same interior knots with the degree lowered by `by`.
    pub fn reduced(&self, by: usize) -> Result<Self> {
        if by > self.degree {
            return Err(Error::Order {
                m: by,
                degree: self.degree,
            });
        }
        Self::new(self.interior, self.degree - by)
    }

    fn check_unit(z: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Domain {
                what: "z",
                value: z,
                domain: "[0, 1]",
            });
        }
        Ok(())
    }

    /// Index `l` of the cell `[κ_l, κ_{l+1})` containing `z`; `z = 1` maps to
    /// the last cell.
    fn cell(&self, z: f64) -> usize {
        let k = self.interior;
        let mut l = ((z * (k + 1) as f64).floor() as usize).min(k);
        let off = self.degree;
        while l < k && z >= self.knots[off + l + 1] {
            l += 1;
        }
        while l > 0 && z < self.knots[off + l] {
            l -= 1;
        }
        l
    }

    /// The `ξ+1` possibly nonzero raw bases at `z`, returned with the index of
    /// the first one.
    pub fn eval_nonzero(&self, z: f64) -> Result<(usize, Vec<f64>)> {
        Self::check_unit(z)?;
        let p = self.degree;
        let span = self.cell(z) + p;
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((span - p, n))
    }

    /// `(ψ_0(z), …, ψ_{K+ξ}(z))` by the Cox–de Boor recursion.
    pub fn eval_raw_basis(&self, z: f64) -> Result<Vec<f64>> {
        let (first, vals) = self.eval_nonzero(z)?;
        let mut out = vec![0.0; self.num_basis()];
        out[first..first + vals.len()].copy_from_slice(&vals);
        Ok(out)
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `m`-th order difference matrix of shape `(size−m) × size`.
///
/// `D_1` has rows `(…, 1, −1, …)`; higher orders are the size-adjusted
/// composition `D_q = D_1^{(size−q+1)} D_{q−1}`, so the rows of `D_2` are
/// `(1, −2, 1)` stencils.
pub fn build_difference_matrix(size: usize, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 || size <= m {
        return Err(Error::Dimension(format!(
            "difference matrix needs 1 <= m < size, got size = {size}, m = {m}"
        )));
    }
    let first = |s: usize| {
        let mut d = DMatrix::zeros(s - 1, s);
        for i in 0..s - 1 {
            d[(i, i)] = 1.0;
            d[(i, i + 1)] = -1.0;
        }
        d
    };
    let mut d = first(size);
    for q in 2..=m {
        d = first(size - q + 1) * d;
    }
    Ok(d)
}

/// Exact `m`-th derivative operator on spline coefficients: for raw
/// coefficients `a`, `d^m/dz^m ψ^[ξ](z)ᵀ a = ψ^[ξ−m](z)ᵀ (G a)`.
///
/// On the equidistant interior `G` equals `(−(K+1))^m D_m`; the rows touching
/// the repeated boundary knots carry the knot-span corrections.
pub fn derivative_operator(grid: &KnotGrid, m: usize) -> Result<DMatrix<f64>> {
    if m > grid.degree() {
        return Err(Error::Order {
            m,
            degree: grid.degree(),
        });
    }
    let mut op = DMatrix::identity(grid.num_basis(), grid.num_basis());
    for r in 1..=m {
        let current = grid.reduced(r - 1)?;
        let p = current.degree();
        let t = current.knots();
        let n = current.num_basis();
        let mut step = DMatrix::zeros(n - 1, n);
        for i in 0..n - 1 {
            let w = p as f64 / (t[i + p + 1] - t[i + 1]);
            step[(i, i)] = -w;
            step[(i, i + 1)] = w;
        }
        op = step * op;
    }
    Ok(op)
}

/// Gram matrix `R_{i,k} = ∫₀¹ ψ^[ξ−m]_{i}(z) ψ^[ξ−m]_{k}(z) dz`, by
/// Gauss–Legendre quadrature on each knot cell (exact for these piecewise
/// polynomials).
pub fn build_gram_matrix(grid: &KnotGrid, m: usize) -> Result<DMatrix<f64>> {
    let low = grid.reduced(m)?;
    let r = low.degree();
    let size = low.num_basis();
    let (nodes, weights) = gauss_legendre(r + 1);
    let mut gram = DMatrix::zeros(size, size);
    let cells = low.interior() + 1;
    let h = low.spacing();
    for cell in 0..cells {
        let a = cell as f64 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let z = a + 0.5 * h * (x + 1.0);
            let (first, vals) = low.eval_nonzero(z)?;
            let wz = 0.5 * h * w;
            for (i, vi) in vals.iter().enumerate() {
                for (k, vk) in vals.iter().enumerate() {
                    gram[(first + i, first + k)] += wz * vi * vk;
                }
            }
        }
    }
    Ok(gram)
}

/// Per-covariate normalized basis `B_k = ψ̄_k / ‖ψ̄_k‖`, with
/// `ψ̄_k = ψ_k − (φ_k/φ_{k−1}) ψ_{k−1}`; `φ` and the norms are empirical
/// moments over the construction sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBasis {
    grid: KnotGrid,
    phi: Vec<f64>,
    norms: Vec<f64>,
}

impl NormalizedBasis {
    pub fn build(grid: &KnotGrid, zsample: &[f64]) -> Result<Self> {
        if zsample.is_empty() {
            return Err(Error::DegenerateSample("empty covariate sample".into()));
        }
        let nb = grid.num_basis();
        let n = zsample.len() as f64;
        let mut phi = vec![0.0; nb];
        let mut rows = Vec::with_capacity(zsample.len());
        for &z in zsample {
            let (first, vals) = grid.eval_nonzero(z)?;
            for (i, v) in vals.iter().enumerate() {
                phi[first + i] += v;
            }
            rows.push((first, vals));
        }
        phi.iter_mut().for_each(|v| *v /= n);
        if let Some(k) = phi.iter().position(|&v| v <= 0.0) {
            return Err(Error::DegenerateSample(format!(
                "raw basis {k} has zero empirical mean (no z values in its support; \
                 reduce the number of knots K = {})",
                grid.interior()
            )));
        }
        let ratios: Vec<f64> = (1..nb).map(|k| phi[k] / phi[k - 1]).collect();
        let mut sq = vec![0.0; nb - 1];
        let mut raw = vec![0.0; nb];
        for (first, vals) in &rows {
            raw.iter_mut().for_each(|v| *v = 0.0);
            raw[*first..*first + vals.len()].copy_from_slice(vals);
            let lo = first.saturating_sub(1);
            let hi = (*first + vals.len()).min(nb - 1);
            for k in lo.max(1)..=hi {
                let centered = raw[k] - ratios[k - 1] * raw[k - 1];
                sq[k - 1] += centered * centered;
            }
        }
        let norms: Vec<f64> = sq.iter().map(|s| (s / n).sqrt()).collect();
        if let Some(k) = norms.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateSample(format!(
                "normalized basis {} has zero empirical norm",
                k + 1
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            phi,
            norms,
        })
    }

    /// Rebuilds a basis from stored moments (e.g. from a saved model).
    pub fn from_parts(grid: KnotGrid, phi: Vec<f64>, norms: Vec<f64>) -> Result<Self> {
        if phi.len() != grid.num_basis() || norms.len() + 1 != grid.num_basis() {
            return Err(Error::Dimension(format!(
                "basis moments have lengths {}/{}, expected {}/{}",
                phi.len(),
                norms.len(),
                grid.num_basis(),
                grid.num_basis() - 1
            )));
        }
        if phi.iter().any(|&v| !(v > 0.0)) || norms.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateSample(
                "stored basis moments must be positive".into(),
            ));
        }
        Ok(Self { grid, phi, norms })
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    /// Empirical means `φ_k` of the raw bases, `k = 0..=K+ξ`.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Empirical norms `‖ψ̄_k‖`, `k = 1..=K+ξ`.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Number of normalized bases, `K + ξ`.
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    /// Writes `(B_1(z), …, B_{K+ξ}(z))` into `out`.
    pub fn eval_into(&self, z: f64, out: &mut [f64]) -> Result<()> {
        let (first, vals) = self.grid.eval_nonzero(z)?;
        out.iter_mut().for_each(|v| *v = 0.0);
        let raw = |k: usize| {
            if k >= first && k < first + vals.len() {
                vals[k - first]
            } else {
                0.0
            }
        };
        let lo = first.max(1);
        let hi = (first + vals.len()).min(self.phi.len() - 1);
        for k in lo..=hi {
            let ratio = self.phi[k] / self.phi[k - 1];
            out[k - 1] = (raw(k) - ratio * raw(k - 1)) / self.norms[k - 1];
        }
        Ok(())
    }

    pub fn eval(&self, z: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out)?;
        Ok(out)
    }

    /// The band matrix `Ψ` with `ψ(z)ᵀ Ψ = B(z)ᵀ`, of shape `(K+ξ+1) × (K+ξ)`.
    pub fn psi_matrix(&self) -> DMatrix<f64> {
        let nb = self.phi.len();
        let mut psi = DMatrix::zeros(nb, nb - 1);
        for k in 1..nb {
            let norm = self.norms[k - 1];
            psi[(k, k - 1)] = 1.0 / norm;
            psi[(k - 1, k - 1)] = -(self.phi[k] / self.phi[k - 1]) / norm;
        }
        psi
    }

    /// `d^m/dz^m B(z)ᵀ v = ψ^[ξ−m](z)ᵀ G_m Ψ v`.
    pub fn eval_mth_derivative(&self, v: &[f64], m: usize, z: f64) -> Result<f64> {
        if m >= self.grid.degree() {
            return Err(Error::Order {
                m,
                degree: self.grid.degree(),
            });
        }
        if v.len() != self.len() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {}, expected {}",
                v.len(),
                self.len()
            )));
        }
        let raw_coef = self.psi_matrix() * nalgebra::DVector::from_column_slice(v);
        let coef = derivative_operator(&self.grid, m)? * raw_coef;
        let low = self.grid.reduced(m)?;
        let (first, vals) = low.eval_nonzero(z)?;
        Ok(vals
            .iter()
            .enumerate()
            .map(|(i, b)| b * coef[first + i])
            .sum())
    }
}

/// The matrices making up the roughness penalty of one covariate.
#[derive(Debug, Clone)]
pub struct PenaltyMatrices {
    /// `Ψ_j`, `(K+ξ+1) × (K+ξ)`.
    pub psi: DMatrix<f64>,
    /// Plain difference stencil `D_m`, `(K+ξ+1−m) × (K+ξ+1)`.
    pub dm: DMatrix<f64>,
    /// Knot-aware derivative operator `G_m` (same shape as `dm`).
    pub derivative: DMatrix<f64>,
    /// Gram matrix `R_m` of the degree `ξ−m` bases.
    pub rm: DMatrix<f64>,
    pub m: usize,
}

impl PenaltyMatrices {
    pub fn new(basis: &NormalizedBasis, m: usize) -> Result<Self> {
        let degree = basis.grid().degree();
        if m == 0 || m >= degree {
            return Err(Error::Order { m, degree });
        }
        let size = basis.grid().num_basis();
        Ok(Self {
            psi: basis.psi_matrix(),
            dm: build_difference_matrix(size, m)?,
            derivative: derivative_operator(basis.grid(), m)?,
            rm: build_gram_matrix(basis.grid(), m)?,
            m,
        })
    }

    /// `P = Ψᵀ G_mᵀ R_m G_m Ψ`, so that `vᵀ P v = ∫₀¹ {(B(z)ᵀv)^{(m)}}² dz`.
    pub fn quadratic_form(&self) -> DMatrix<f64> {
        let gpsi = &self.derivative * &self.psi;
        let p = gpsi.transpose() * &self.rm * &gpsi;
        // exact symmetry
        (&p + p.transpose()) * 0.5
    }
}

/// Matrix of the roughness functional `v ↦ ∫₀¹ {(B(z)ᵀv)^{(m)}}² dz`.
pub fn penalty_quadratic_form(basis: &NormalizedBasis, m: usize) -> Result<DMatrix<f64>> {
    Ok(PenaltyMatrices::new(basis, m)?.quadratic_form())
}
