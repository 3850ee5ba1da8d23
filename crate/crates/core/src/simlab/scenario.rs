//! Data-generating scenarios with known shape and scale functions.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{gpd_sample, GpdPoint};
use crate::pot::{apply_threshold, ExceedanceSample, RawTable, ThresholdSpec};

use super::{replicate_rng, DEFAULT_SEED};

/// Mean-zero (under `U(0,1)`) smooth truths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothFn {
    Zero,
    /// `a sin(2πz)`
    Sin { a: f64 },
    /// `a cos(2πz)`
    Cos { a: f64 },
    /// `a (z − 1/2)`
    Linear { a: f64 },
}

impl SmoothFn {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            SmoothFn::Zero => 0.0,
            SmoothFn::Sin { a } => a * (TAU * z).sin(),
            SmoothFn::Cos { a } => a * (TAU * z).cos(),
            SmoothFn::Linear { a } => a * (z - 0.5),
        }
    }

    /// Exact `(min, max)` over `[0, 1]`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            SmoothFn::Zero => (0.0, 0.0),
            SmoothFn::Sin { a } | SmoothFn::Cos { a } => (-a.abs(), a.abs()),
            SmoothFn::Linear { a } => (-0.5 * a.abs(), 0.5 * a.abs()),
        }
    }
}

/// `β₀ᵀx + Σ_j g_j(z_j)`; `beta[0]` multiplies the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveTruth {
    pub beta: Vec<f64>,
    pub smooths: Vec<SmoothFn>,
}

impl AdditiveTruth {
    /// `x` includes the intercept.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        let lin: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        lin + self.smooths.iter().zip(z).map(|(g, v)| g.eval(*v)).sum::<f64>()
    }

    /// Exact range over `x ∈ {1} × [−1,1]^{p−1}`, `z ∈ [0,1]^d`.
    pub fn range(&self) -> (f64, f64) {
        let spread: f64 = self.beta.iter().skip(1).map(|b| b.abs()).sum();
        let b0 = self.beta.first().copied().unwrap_or(0.0);
        let (mut lo, mut hi) = (b0 - spread, b0 + spread);
        for g in &self.smooths {
            let (a, b) = g.range();
            lo += a;
            hi += b;
        }
        (lo, hi)
    }

    pub fn is_zero(&self) -> bool {
        self.beta.iter().all(|b| *b == 0.0)
            && self.smooths.iter().all(|g| g.range() == (0.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignRegime {
    /// `min γ > 0`
    S1,
    /// `−2/5 < γ < 0`
    S2,
    /// `γ ≡ 0`
    S3,
}

/// Which scale the `scale` truth is additive in, for exact-GPD data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdditiveScale {
    #[default]
    Sigma,
    Varsigma,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Family {
    /// `Y* = w + GPD(γ, σ)` with probability `tail_fraction`, else `w·U`.
    /// Exceedances over the constant threshold `w` are exactly GPD.
    ExactGpd {
        #[serde(default = "one")]
        tail_fraction: f64,
    },
    /// `Y* = e^s W` with `P(W > w) = (1 + w^c)^{−k}`, `c = 1/(γk)`; the
    /// second-order parameter is `ρ = −1/k`.
    Burr { k: f64 },
    /// `Y* = e^s W/(1+W)` with `W` Burr of index `|γ|`; finite endpoint `e^s`.
    ReversedBurr { k: f64 },
    /// `Y* = e^s |N(0,1)|`.
    Gaussian,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: Family,
    pub gamma: AdditiveTruth,
    /// `log σ` (or `log ς`) for exact GPD; `s` in the multiplier `e^s`
    /// otherwise.
    pub scale: AdditiveTruth,
    #[serde(default)]
    pub additive_scale: AdditiveScale,
    pub threshold: ThresholdSpec,
    pub sign_regime: SignRegime,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Raw data plus the truth at every generated row.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub raw: RawTable,
    pub gamma_true: Vec<f64>,
}

impl Scenario {
    /// Linear covariates including the intercept.
    pub fn p(&self) -> usize {
        self.gamma.beta.len()
    }

    pub fn d(&self) -> usize {
        self.gamma.smooths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.p() < 1 || self.d() < 1 {
            return bad("scenario needs an intercept coefficient and at least one smooth".into());
        }
        if self.scale.beta.len() != self.p() || self.scale.smooths.len() != self.d() {
            return bad("shape and scale truths must have the same numbers of terms".into());
        }
        let mut coefs = self
            .gamma
            .beta
            .iter()
            .chain(&self.scale.beta)
            .copied()
            .chain(self.gamma.smooths.iter().chain(&self.scale.smooths).map(|g| g.range().1));
        if coefs.any(|v| !v.is_finite()) {
            return bad("scenario coefficients must be finite".into());
        }
        self.threshold.validate()?;
        if matches!(self.threshold, ThresholdSpec::Column(_)) {
            return bad("column thresholds are not available in simulations".into());
        }
        let (lo, hi) = self.gamma.range();
        let regime_ok = match self.sign_regime {
            SignRegime::S1 => lo > 0.0,
            SignRegime::S2 => lo > -0.4 && hi < 0.0,
            SignRegime::S3 => self.gamma.is_zero(),
        };
        if !regime_ok {
            return bad(format!(
                "shape truth ranges over [{lo}, {hi}], violating sign regime {:?}",
                self.sign_regime
            ));
        }
        let needs = match &self.family {
            Family::ExactGpd { tail_fraction } => {
                if !(*tail_fraction > 0.0 && *tail_fraction <= 1.0) {
                    return bad(format!("tail_fraction must lie in (0, 1], got {tail_fraction}"));
                }
                let ThresholdSpec::Constant(w) = self.threshold else {
                    return bad("exact-gpd scenarios need a constant threshold".into());
                };
                if *tail_fraction < 1.0 && !(w > 0.0) {
                    return bad("exact-gpd with tail_fraction < 1 needs a positive threshold".into());
                }
                if lo <= -0.5 {
                    return bad(format!("exact-gpd needs gamma > -1/2 everywhere, got min {lo}"));
                }
                None
            }
            Family::Burr { k } | Family::ReversedBurr { k } if !(*k > 0.0 && k.is_finite()) => {
                return bad(format!("burr parameter k must be positive, got {k}"));
            }
            Family::Burr { .. } => Some(SignRegime::S1),
            Family::ReversedBurr { .. } => Some(SignRegime::S2),
            Family::Gaussian => Some(SignRegime::S3),
        };
        if let Some(r) = needs {
            if r != self.sign_regime {
                return bad(format!(
                    "family {:?} requires sign regime {r:?}, scenario declares {:?}",
                    self.family, self.sign_regime
                ));
            }
        }
        if self.additive_scale == AdditiveScale::Varsigma
            && !matches!(self.family, Family::ExactGpd { .. })
        {
            return bad("additive_scale = varsigma applies to exact-gpd scenarios only".into());
        }
        Ok(())
    }

    /// True shape; `x` includes the intercept.
    pub fn gamma_at(&self, x: &[f64], z: &[f64]) -> f64 {
        self.gamma.eval(x, z)
    }

    /// True `log σ` for exact-GPD scenarios, `None` otherwise.
    pub fn log_sigma_at(&self, x: &[f64], z: &[f64]) -> Option<f64> {
        if !matches!(self.family, Family::ExactGpd { .. }) {
            return None;
        }
        let s = self.scale.eval(x, z);
        Some(match self.additive_scale {
            AdditiveScale::Sigma => s,
            AdditiveScale::Varsigma => s - (1.0 + self.gamma_at(x, z)).ln(),
        })
    }

    /// True `log ς = log σ + log(1+γ)` for exact-GPD scenarios.
    pub fn log_varsigma_at(&self, x: &[f64], z: &[f64]) -> Option<f64> {
        self.log_sigma_at(x, z)
            .map(|l| l + (1.0 + self.gamma_at(x, z)).ln())
    }

    /// Total sample size `N` expected to give `n` exceedances.
    pub fn total_for(&self, n: usize) -> Result<usize> {
        match (&self.threshold, &self.family) {
            (ThresholdSpec::MarginalQuantile(a), _) => Ok(((n as f64) / (1.0 - a)).round() as usize),
            (ThresholdSpec::Constant(_), Family::ExactGpd { tail_fraction }) => {
                Ok(((n as f64) / tail_fraction).round() as usize)
            }
            _ => Err(Error::Validation(
                "a target exceedance count needs a quantile threshold or an exact-gpd scenario".into(),
            )),
        }
    }

    /// `N` rows from the scenario's own seed.
    pub fn generate(&self, big_n: usize) -> Result<Generated> {
        self.generate_with(big_n, &mut replicate_rng(self.seed, 0))
    }

    pub fn generate_with<R: Rng>(&self, big_n: usize, rng: &mut R) -> Result<Generated> {
        self.validate()?;
        if big_n == 0 {
            return Err(Error::Validation("sample size N must be at least 1".into()));
        }
        let (p, d) = (self.p(), self.d());
        let mut raw = RawTable {
            y: Vec::with_capacity(big_n),
            x: Vec::with_capacity(big_n),
            z: Vec::with_capacity(big_n),
            extra: Default::default(),
        };
        let mut gamma_true = Vec::with_capacity(big_n);
        let mut xi = vec![1.0; p];
        for _ in 0..big_n {
            for v in xi.iter_mut().skip(1) {
                *v = rng.gen_range(-1.0..1.0);
            }
            let z: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let gamma = self.gamma_at(&xi, &z);
            let s = self.scale.eval(&xi, &z);
            let u: f64 = Open01.sample(rng);
            let y = match &self.family {
                Family::ExactGpd { tail_fraction } => {
                    let ThresholdSpec::Constant(w) = self.threshold else {
                        unreachable!("validated")
                    };
                    let sigma = self.log_sigma_at(&xi, &z).expect("exact gpd").exp();
                    if *tail_fraction >= 1.0 || rng.gen::<f64>() < *tail_fraction {
                        w + gpd_sample(&GpdPoint::new(gamma, sigma)?, u)
                    } else {
                        w * rng.gen::<f64>()
                    }
                }
                Family::Burr { k } => s.exp() * burr_draw(gamma, *k, u),
                Family::ReversedBurr { k } => {
                    let w = burr_draw(-gamma, *k, u);
                    s.exp() * (w / (1.0 + w))
                }
                Family::Gaussian => {
                    let g: f64 = StandardNormal.sample(rng);
                    s.exp() * g.abs()
                }
            };
            raw.y.push(y);
            raw.x.push(xi[1..].to_vec());
            raw.z.push(z);
            gamma_true.push(gamma);
        }
        Ok(Generated { raw, gamma_true })
    }

    /// Generates `N` rows and applies the scenario threshold.
    pub fn exceedances_with<R: Rng>(&self, big_n: usize, rng: &mut R) -> Result<ExceedanceSample> {
        apply_threshold(&self.generate_with(big_n, rng)?.raw, &self.threshold)
    }
}

/// Burr XII draw with tail index `gamma > 0` and `ρ = −1/k`.
fn burr_draw(gamma: f64, k: f64, u: f64) -> f64 {
    let c = 1.0 / (gamma * k);
    ((1.0 - u).powf(-1.0 / k) - 1.0).powf(1.0 / c)
}
