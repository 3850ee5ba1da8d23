//! Generalized Pareto calculus.
//!
//! All derivative quantities refer to the per-observation negative
//! log-likelihood `f = −log h(y | γ, σ)` as a function of the shape `γ` and
//! the log-scale `η = log σ`. Expressions are written in terms of
//! `x = γ y / σ`, with the removable singularities at `x = 0` evaluated by
//! power series, so the exponential limit `γ → 0` needs no special casing.

use crate::error::{Error, Result};

/// Below this `|γ y / σ|` the series forms replace the closed forms.
pub const SERIES_SWITCH: f64 = 1e-2;

const SERIES_TERMS: usize = 14;

/// `log(1+x)/x`.
fn q1(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        let mut sum = 0.0;
        for k in (0..SERIES_TERMS).rev() {
            sum = sum * -x + 1.0 / (k + 1) as f64;
        }
        sum
    } else {
        x.ln_1p() / x
    }
}

/// `(x/(1+x) − log(1+x)) / x²`.
fn q2(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        // Σ_{k≥2} (−1)^{k+1} (1 − 1/k) x^{k−2}
        let mut sum = 0.0;
        for k in (2..SERIES_TERMS + 2).rev() {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sum = sum * x + sign * (1.0 - 1.0 / k as f64);
        }
        sum
    } else {
        (x / (1.0 + x) - x.ln_1p()) / (x * x)
    }
}

/// `(2 log(1+x) − 2x/(1+x) − x²/(1+x)²) / x³`.
fn q3(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        // Σ_{k≥3} (−1)^{k+1} (k−1)(k−2)/k · x^{k−3}
        let mut sum = 0.0;
        for k in (3..SERIES_TERMS + 3).rev() {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            let kf = k as f64;
            sum = sum * x + sign * (kf - 1.0) * (kf - 2.0) / kf;
        }
        sum
    } else {
        let s = 1.0 + x;
        (2.0 * x.ln_1p() - 2.0 * x / s - x * x / (s * s)) / (x * x * x)
    }
}

/// `expm1(a)/a`.
fn expm1_ratio(a: f64) -> f64 {
    if a.abs() < 1e-8 {
        1.0 + 0.5 * a
    } else {
        a.exp_m1() / a
    }
}

/// Shape/scale pair of the plain family `H(y/σ | γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdPoint {
    pub gamma: f64,
    pub sigma: f64,
}

/// Orthogonal parametrization with `ς = σ (γ + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdOrthoPoint {
    pub gamma: f64,
    pub varsigma: f64,
}

impl GpdPoint {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !gamma.is_finite() {
            return Err(Error::Parameter(format!(
                "GPD requires finite gamma and sigma > 0, got gamma = {gamma}, sigma = {sigma}"
            )));
        }
        Ok(Self { gamma, sigma })
    }

    /// Upper support endpoint (`+∞` for `γ ≥ 0`).
    pub fn upper_endpoint(&self) -> f64 {
        if self.gamma < 0.0 {
            -self.sigma / self.gamma
        } else {
            f64::INFINITY
        }
    }

    pub fn to_ortho(&self) -> Result<GpdOrthoPoint> {
        GpdOrthoPoint::new(self.gamma, self.sigma * (self.gamma + 1.0))
    }
}

impl GpdOrthoPoint {
    pub fn new(gamma: f64, varsigma: f64) -> Result<Self> {
        if !(gamma > -1.0) || !(varsigma > 0.0) || !varsigma.is_finite() {
            return Err(Error::Parameter(format!(
                "orthogonal GPD requires gamma > -1 and varsigma > 0, got gamma = {gamma}, varsigma = {varsigma}"
            )));
        }
        Ok(Self { gamma, varsigma })
    }

    pub fn to_plain(&self) -> GpdPoint {
        GpdPoint {
            gamma: self.gamma,
            sigma: self.varsigma / (self.gamma + 1.0),
        }
    }
}

/// `f = −log h` and its derivatives in `(γ, η)`, `η` being the log of the
/// family's scale parameter (`σ` or `ς`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllDerivs {
    pub value: f64,
    pub d_gamma: f64,
    pub d_eta: f64,
    pub d_gamma_gamma: f64,
    pub d_gamma_eta: f64,
    pub d_eta_eta: f64,
}

/// Derivatives of `−log h(y | γ, e^η)`, or `None` if `y` is outside the
/// support (or `y ≤ 0`).
pub fn nll_derivs(gamma: f64, eta: f64, y: f64) -> Option<NllDerivs> {
    if !(y > 0.0) {
        return None;
    }
    let t = y * (-eta).exp();
    let x = gamma * t;
    let s = 1.0 + x;
    if !(s > 0.0) || !t.is_finite() {
        return None;
    }
    let value = eta + t * q1(x) + x.ln_1p();
    let d_gamma = t * t * q2(x) + t / s;
    let d_eta = 1.0 - (1.0 + gamma) * t / s;
    let d_gamma_gamma = t * t * t * q3(x) - t * t / (s * s);
    let d_gamma_eta = t * (t - 1.0) / (s * s);
    let d_eta_eta = (1.0 + gamma) * t / (s * s);
    if !value.is_finite() {
        return None;
    }
    Some(NllDerivs {
        value,
        d_gamma,
        d_eta,
        d_gamma_gamma,
        d_gamma_eta,
        d_eta_eta,
    })
}

/// Derivatives of `−log h^§(y | γ, e^ζ)` in `(γ, ζ = log ς)`; requires `γ > −1`.
pub fn ortho_nll_derivs(gamma: f64, log_varsigma: f64, y: f64) -> Option<NllDerivs> {
    if !(gamma > -1.0) {
        return None;
    }
    let g1 = 1.0 + gamma;
    let eta = log_varsigma - g1.ln();
    let p = nll_derivs(gamma, eta, y)?;
    Some(NllDerivs {
        value: p.value,
        d_gamma: p.d_gamma - p.d_eta / g1,
        d_eta: p.d_eta,
        d_gamma_gamma: p.d_gamma_gamma - 2.0 * p.d_gamma_eta / g1
            + (p.d_eta_eta + p.d_eta) / (g1 * g1),
        d_gamma_eta: p.d_gamma_eta - p.d_eta_eta / g1,
        d_eta_eta: p.d_eta_eta,
    })
}

fn plain_derivs(p: &GpdPoint, y: f64) -> Result<NllDerivs> {
    if !(y > 0.0) {
        return Err(Error::Domain {
            what: "y",
            value: y,
            domain: "(0, inf)",
        });
    }
    nll_derivs(p.gamma, p.sigma.ln(), y).ok_or(Error::Support {
        gamma: p.gamma,
        scale: p.sigma,
        y,
    })
}

fn ortho_derivs(p: &GpdOrthoPoint, y: f64) -> Result<NllDerivs> {
    if !(y > 0.0) {
        return Err(Error::Domain {
            what: "y",
            value: y,
            domain: "(0, inf)",
        });
    }
    ortho_nll_derivs(p.gamma, p.varsigma.ln(), y).ok_or(Error::Support {
        gamma: p.gamma,
        scale: p.varsigma,
        y,
    })
}

/// `log h(y | γ, σ) = −log σ − (1/γ + 1) log(1 + γ y/σ)`.
pub fn gpd_logpdf(p: &GpdPoint, y: f64) -> Result<f64> {
    Ok(-plain_derivs(p, y)?.value)
}

/// `ℓ_γ = ∂(−log h)/∂γ`.
pub fn score_gamma(p: &GpdPoint, y: f64) -> Result<f64> {
    Ok(plain_derivs(p, y)?.d_gamma)
}

/// `ℓ_σ = ∂(−log h)/∂ log σ`.
pub fn score_logsigma(p: &GpdPoint, y: f64) -> Result<f64> {
    Ok(plain_derivs(p, y)?.d_eta)
}

/// `log h^§(y | γ, ς)` with `h^§(y) = (γ+1)/ς · (1 + γ(γ+1)y/ς)^{−1/γ−1}`.
pub fn ortho_logpdf(p: &GpdOrthoPoint, y: f64) -> Result<f64> {
    Ok(-ortho_derivs(p, y)?.value)
}

/// `∂(−log h^§)/∂γ` at fixed `ς`.
pub fn score_gamma_ortho(p: &GpdOrthoPoint, y: f64) -> Result<f64> {
    Ok(ortho_derivs(p, y)?.d_gamma)
}

/// `∂(−log h^§)/∂ log ς`.
pub fn score_logvarsigma(p: &GpdOrthoPoint, y: f64) -> Result<f64> {
    Ok(ortho_derivs(p, y)?.d_eta)
}

fn check_fisher(gamma: f64) -> Result<()> {
    if !(gamma > -0.5) {
        return Err(Error::NonExistence { gamma });
    }
    Ok(())
}

/// Per-observation Fisher information of `(γ, log σ)`.
pub fn fisher_info(gamma: f64) -> Result<[[f64; 2]; 2]> {
    check_fisher(gamma)?;
    let a = 1.0 / (2.0 * gamma + 1.0);
    let b = a / (gamma + 1.0);
    Ok([[2.0 * b, b], [b, a]])
}

/// Per-observation Fisher information of `(γ, log ς)`; diagonal.
pub fn fisher_info_ortho(gamma: f64) -> Result<[[f64; 2]; 2]> {
    check_fisher(gamma)?;
    let g1 = gamma + 1.0;
    Ok([[1.0 / (g1 * g1), 0.0], [0.0, 1.0 / (2.0 * gamma + 1.0)]])
}

/// Inverse-CDF draw: `σ((1−u)^{−γ} − 1)/γ`, `−σ log(1−u)` at `γ = 0`.
pub fn gpd_sample(p: &GpdPoint, u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    let e = -(-u).ln_1p();
    p.sigma * e * expm1_ratio(p.gamma * e)
}

/// Quantile at upper-tail probability `t = 1 − u`; keeps precision for
/// `t` near 0.
pub fn gpd_sample_upper(p: &GpdPoint, t: f64) -> f64 {
    debug_assert!(t > 0.0 && t <= 1.0);
    let e = -t.ln();
    p.sigma * e * expm1_ratio(p.gamma * e)
}

/// Survival function `H̄(y/σ | γ) = (1 + γy/σ)^{−1/γ}`.
pub fn gpd_survival(p: &GpdPoint, y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let t = y / p.sigma;
    let x = p.gamma * t;
    if x <= -1.0 {
        return 0.0;
    }
    (-t * q1(x)).exp()
}

pub fn gpd_cdf(p: &GpdPoint, y: f64) -> f64 {
    1.0 - gpd_survival(p, y)
}

/// Second-order parameters of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderSpec {
    pub rho: f64,
    pub alpha1: f64,
}

/// `(x^a − 1)/a`, `log x` at `a = 0`.
fn box_cox(x: f64, a: f64) -> f64 {
    let l = x.ln();
    l * expm1_ratio(a * l)
}

/// `∂/∂a (x^a − 1)/a`, which is `(log x)²/2` at `a = 0`.
fn box_cox_da(x: f64, a: f64) -> f64 {
    let l = x.ln();
    let b = a * l;
    if b.abs() < 1e-4 {
        // l² (1/2 + b/3 + b²/8 + b³/30)
        l * l * (0.5 + b / 3.0 + b * b / 8.0 + b * b * b / 30.0)
    } else {
        (b * b.exp() - b.exp_m1()) / (a * a)
    }
}

/// Second-order auxiliary function
/// `Q̃(x | γ, ρ) = ((x^{γ+ρ} − 1)/(γ+ρ) − (x^γ − 1)/γ) / ρ`, with the
/// `γ → 0`, `γ + ρ → 0` and `ρ → 0` limits.
pub fn eval_qtilde(x: f64, gamma: f64, rho: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(0, inf)",
        });
    }
    if rho > 0.0 {
        return Err(Error::Parameter(format!("rho must be <= 0, got {rho}")));
    }
    if rho.abs() < 1e-10 {
        return Ok(box_cox_da(x, gamma));
    }
    Ok((box_cox(x, gamma + rho) - box_cox(x, gamma)) / rho)
}

/// `Q(y | γ, ρ) = H̄(y|γ)^{1+γ} Q̃(1/H̄(y|γ) | γ, ρ)` on the unit-scale support.
pub fn eval_q(y: f64, gamma: f64, rho: f64) -> Result<f64> {
    let unit = GpdPoint {
        gamma,
        sigma: 1.0,
    };
    if !(y >= 0.0) || y >= unit.upper_endpoint() {
        return Err(Error::Domain {
            what: "y",
            value: y,
            domain: "GPD support",
        });
    }
    let bar = gpd_survival(&unit, y);
    if bar <= 0.0 {
        return Ok(0.0);
    }
    Ok(bar.powf(1.0 + gamma) * eval_qtilde(1.0 / bar, gamma, rho)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(g: f64, s: f64) -> GpdPoint {
        GpdPoint::new(g, s).unwrap()
    }

    #[test]
    fn logpdf_examples() {
        assert!((gpd_logpdf(&pt(0.0, 1.0), 1.0).unwrap() + 1.0).abs() < 1e-15);
        let v = gpd_logpdf(&pt(1.0, 1.0), 1.0).unwrap();
        assert!((v + 2.0 * 2f64.ln()).abs() < 1e-14);
        let v = gpd_logpdf(&pt(-0.25, 1.0), 2.0).unwrap();
        assert!((v - 0.125f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn logpdf_errors() {
        assert!(matches!(
            gpd_logpdf(&pt(-0.5, 1.0), 3.0),
            Err(Error::Support { .. })
        ));
        assert!(matches!(
            gpd_logpdf(&pt(0.1, 1.0), 0.0),
            Err(Error::Domain { .. })
        ));
        assert!(GpdPoint::new(0.1, -1.0).is_err());
    }

    #[test]
    fn score_examples() {
        let g = score_gamma(&pt(1.0, 1.0), 1.0).unwrap();
        assert!((g - (1.0 - 2f64.ln())).abs() < 1e-14);
        assert!((score_gamma(&pt(0.0, 1.0), 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((score_gamma(&pt(0.0, 2.0), 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(score_logsigma(&pt(0.0, 1.0), 1.0).unwrap().abs() < 1e-15);
        assert!(score_logsigma(&pt(1.0, 1.0), 1.0).unwrap().abs() < 1e-15);
        assert!((score_logsigma(&pt(0.5, 2.0), 4.0).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_gamma_zero_limit_by_richardson() {
        // closed form evaluated away from zero, extrapolated to γ = 0
        let direct = |g: f64, s: f64, y: f64| {
            let x = g * y / s;
            (1.0 / g + 1.0) * (y / s) / (1.0 + x) - x.ln_1p() / (g * g)
        };
        for &(s, y) in &[(1.0, 1.0), (2.0, 2.0), (1.5, 0.3)] {
            let h = 1e-3;
            let sym = |h: f64| 0.5 * (direct(h, s, y) + direct(-h, s, y));
            let rich = (4.0 * sym(h / 2.0) - sym(h)) / 3.0;
            let lim = score_gamma(&pt(0.0, s), y).unwrap();
            assert!((rich - lim).abs() < 1e-8, "{rich} vs {lim}");
            let t = y / s;
            assert!((lim - (t - 0.5 * t * t)).abs() < 1e-15);
        }
    }

    #[test]
    fn logpdf_continuous_across_series_switch() {
        // closed form with log1p is accurate at |γ| = 1e-5
        for &g in &[1e-5_f64, -1e-5] {
            for &y in &[0.1, 1.0, 5.0] {
                let direct = -(1.0 / g + 1.0) * (g * y).ln_1p();
                let ours = gpd_logpdf(&pt(g, 1.0), y).unwrap();
                assert!((direct - ours).abs() < 1e-10);
            }
        }
        // and the two branches of each helper agree at the switch point
        for &x in &[SERIES_SWITCH, -SERIES_SWITCH] {
            let below = x * (1.0 - 1e-12);
            assert!((q1(below) - x.ln_1p() / x).abs() < 1e-13);
            assert!((q2(below) - (x / (1.0 + x) - x.ln_1p()) / (x * x)).abs() < 1e-9);
            let s = 1.0 + x;
            let c3 = (2.0 * x.ln_1p() - 2.0 * x / s - x * x / (s * s)) / (x * x * x);
            assert!((q3(below) - c3).abs() < 1e-6);
        }
    }

    #[test]
    fn fisher_closed_forms() {
        assert_eq!(fisher_info(0.0).unwrap(), [[2.0, 1.0], [1.0, 1.0]]);
        let f = fisher_info(0.5).unwrap();
        assert!((f[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((f[1][1] - 0.5).abs() < 1e-15);
        assert!(matches!(fisher_info(-0.5), Err(Error::NonExistence { .. })));
        assert_eq!(fisher_info_ortho(0.0).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        let o = fisher_info_ortho(0.5).unwrap();
        assert!((o[0][0] - 4.0 / 9.0).abs() < 1e-15 && o[0][1] == 0.0);
        assert!(fisher_info_ortho(-0.7).is_err());
    }

    #[test]
    fn ortho_examples() {
        let p = GpdOrthoPoint::new(0.0, 1.0).unwrap();
        assert!((ortho_logpdf(&p, 1.0).unwrap() + 1.0).abs() < 1e-15);
        let p = GpdOrthoPoint::new(1.0, 2.0).unwrap();
        assert!((ortho_logpdf(&p, 1.0).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!(GpdOrthoPoint::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn sampler_examples() {
        let e = 1.0 - (-1.0f64).exp();
        assert!((gpd_sample(&pt(0.0, 1.0), e) - 1.0).abs() < 1e-14);
        assert!((gpd_sample(&pt(1.0, 1.0), 0.5) - 1.0).abs() < 1e-14);
        // inverse of the CDF
        for &g in &[-0.3, 0.0, 0.4] {
            for &u in &[0.01, 0.5, 0.99] {
                let y = gpd_sample(&pt(g, 2.0), u);
                assert!((gpd_cdf(&pt(g, 2.0), y) - u).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qtilde_vanishes_at_one() {
        for &g in &[-0.3, 0.0, 0.5] {
            for &r in &[-2.0, -0.5, 0.0] {
                assert!(eval_qtilde(1.0, g, r).unwrap().abs() < 1e-15);
            }
        }
        // γ + ρ = 0
        assert!(eval_qtilde(2.0, 0.5, -0.5).unwrap().is_finite());
        assert!(eval_qtilde(0.0, 0.1, -1.0).is_err());
        assert!(eval_qtilde(2.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn qtilde_rho_limit() {
        for &g in &[-0.2, 0.0, 0.3] {
            for &x in &[0.5, 2.0, 10.0] {
                let near = eval_qtilde(x, g, -1e-8).unwrap();
                let lim = eval_qtilde(x, g, 0.0).unwrap();
                assert!((near - lim).abs() < 1e-6, "g={g} x={x}: {near} vs {lim}");
            }
        }
    }

    #[test]
    fn q_bounded_on_support() {
        for &g in &[-0.2f64, 0.3] {
            let end = if g < 0.0 { -1.0 / g } else { 200.0 };
            let mut max: f64 = 0.0;
            for i in 1..2000 {
                let y = end * i as f64 / 2000.0;
                let v = eval_q(y, g, -1.0).unwrap();
                assert!(v.is_finite());
                max = max.max(v.abs());
            }
            assert!(max < 10.0);
        }
    }
}
