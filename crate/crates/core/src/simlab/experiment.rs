//! Rate-of-convergence and local-normality experiments.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::ModelSpec;
use crate::error::{Error, Result};
use crate::fitter::FitConfig;
use crate::inference::normal_quantile;
use crate::model::{write_atomic, FittedModel};

use super::replicate_rng;
use super::scenario::Scenario;

/// Points of the fixed evaluation grid used for RMSEs.
pub const GRID_POINTS: usize = 200;
/// Largest tolerated share of dropped replicates.
pub const MAX_DROP_FRACTION: f64 = 0.1;

/// Smoothing parameters per sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Smoothing {
    Fixed { lambda: f64, nu: f64 },
    /// `λ = ν = c·n·K^{−2m}`, i.e. `c K^{−2m}` per observation.
    Scaled { c: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Scaled { c: 1e-2 }
    }
}

impl Smoothing {
    pub fn values(&self, n: usize, knots: usize, m: usize) -> (f64, f64) {
        match *self {
            Smoothing::Fixed { lambda, nu } => (lambda, nu),
            Smoothing::Scaled { c } => {
                let v = c * n as f64 / (knots as f64).powi(2 * m as i32);
                (v, v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateTarget {
    /// RMSE of `γ̂` over the evaluation grid; expected slope `−m/(2m+1)`.
    #[default]
    Smooth,
    /// `‖β̂ − β₀‖`; expected slope `−1/2`.
    Parametric,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

fn default_m() -> usize {
    2
}

/// The plug-in covariance inverts the penalized Hessian, which matches the
/// sampling variance only while the penalty is small next to the
/// information; the normality experiment defaults to that regime.
fn normality_smoothing() -> Smoothing {
    Smoothing::Scaled { c: 1e-4 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub scenario: Scenario,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub reparam: bool,
    #[serde(default)]
    pub target: RateTarget,
    /// Acceptance band for the slope; defaults depend on the target.
    #[serde(default)]
    pub band: Option<[f64; 2]>,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub reps: usize,
    /// Linear covariates without the intercept.
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub knots: Option<usize>,
    #[serde(default = "normality_smoothing")]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub reparam: bool,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Rate(RateConfig),
    Normality(NormalityConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub knots: usize,
    pub lambda: f64,
    pub nu: f64,
    pub reps_used: usize,
    pub dropped: usize,
    pub mean_exceedances: f64,
    pub rmse_gamma: f64,
    /// `None` when the scenario has no exact scale truth.
    pub rmse_scale: Option<f64>,
    pub beta_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub target: RateTarget,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub reparam: bool,
    pub rows: Vec<RateRow>,
    /// Log-log slope of the target metric against `n`.
    pub slope: f64,
    /// Monte Carlo standard error of `slope` (delta method over replicates).
    pub slope_se: f64,
    /// Residual standard error of the log-log regression.
    pub regression_se: Option<f64>,
    pub slope_scale: Option<f64>,
    pub expected_slope: f64,
    pub band: [f64; 2],
    pub pass: bool,
    pub warnings: Vec<String>,
}

impl RateReport {
    pub fn n_grid(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub n: usize,
    pub gamma_hat: f64,
    pub se_gamma: f64,
    pub log_scale_hat: f64,
    pub se_log_scale: f64,
    pub z_gamma: f64,
    pub covered90: bool,
    pub covered95: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub n: usize,
    pub knots: usize,
    pub reps: usize,
    pub reps_used: usize,
    pub dropped: usize,
    pub seed: u64,
    pub reparam: bool,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub gamma_true: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub skew_z: f64,
    pub coverage90: f64,
    pub coverage95: f64,
    /// Correlation of `γ̂` and the fitted log-scale across replicates.
    pub corr_gamma_log_scale: f64,
    /// Monte Carlo variance of `γ̂` and the mean plug-in variance.
    pub mc_var_gamma: f64,
    pub mean_plugin_var_gamma: f64,
    pub var_band: [f64; 2],
    pub coverage95_band: [f64; 2],
    /// Applied to reparametrized runs only.
    pub max_abs_corr: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

impl NormalityReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Writes the CSV and JSON reports (atomically) where configured.
pub(crate) fn write_reports<T: Serialize>(paths: &OutputPaths, csv: Vec<u8>, summary: &T) -> Result<()> {
    if let Some(p) = &paths.csv {
        write_atomic(p, &csv)?;
    }
    if let Some(p) = &paths.json {
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        write_atomic(p, text.as_bytes())?;
    }
    Ok(())
}

impl RateConfig {
    pub fn write_reports(&self, report: &RateReport) -> Result<()> {
        write_reports(&self.output, report.to_csv()?, report)
    }
}

impl NormalityConfig {
    pub fn default_smoothing() -> Smoothing {
        normality_smoothing()
    }

    pub fn write_reports(&self, report: &NormalityReport) -> Result<()> {
        write_reports(&self.output, report.to_csv()?, report)
    }
}

/// Fixed quasi-uniform covariate grid: `x ∈ [−1,1]^{p−1}`, `z ∈ [0,1]^d`
/// from an additive recurrence with generalized golden-ratio steps.
/// Returned `x` rows exclude the intercept.
pub fn eval_grid(p: usize, d: usize, points: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = (p - 1) + d;
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=dim).map(|k| phi.powi(-(k as i32))).collect();
    (0..points)
        .map(|i| {
            let u: Vec<f64> = alpha
                .iter()
                .map(|a| (0.5 + a * (i as f64 + 1.0)).fract())
                .collect();
            let x = u[..p - 1].iter().map(|v| 2.0 * v - 1.0).collect();
            let z = u[p - 1..].to_vec();
            (x, z)
        })
        .collect()
}

fn with_intercept(x: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(x.iter().copied()).collect()
}

struct RateRep {
    n: usize,
    mse_gamma: f64,
    mse_scale: Option<f64>,
    beta_err2: f64,
}

fn model_spec(sc: &Scenario, n: usize, knots: usize, m: usize, smoothing: &Smoothing, reparam: bool) -> ModelSpec {
    let mut spec = ModelSpec::new(sc.p(), sc.d(), knots);
    spec.m = m;
    let (lambda, nu) = smoothing.values(n, knots, m);
    spec.lambda = lambda;
    spec.nu = nu;
    spec.reparam = reparam;
    spec
}

fn rate_rep(
    sc: &Scenario,
    spec: &ModelSpec,
    big_n: usize,
    seed: u64,
    index: u64,
    grid: &[(Vec<f64>, Vec<f64>)],
) -> Option<RateRep> {
    let mut rng = replicate_rng(seed, index);
    let sample = sc.exceedances_with(big_n, &mut rng).ok()?;
    let model = FittedModel::fit_sample(spec, &sample, &FitConfig::default()).ok()?;
    if !model.fit.converged {
        return None;
    }
    let mut se_g = 0.0;
    let mut se_s = 0.0;
    let mut has_scale = true;
    for (x, z) in grid {
        let xi = with_intercept(x);
        let (g, s) = model.predict_point(x, z).ok()?;
        se_g += (g - sc.gamma_at(&xi, z)).powi(2);
        let truth = if spec.reparam {
            sc.log_varsigma_at(&xi, z)
        } else {
            sc.log_sigma_at(&xi, z)
        };
        match truth {
            Some(t) => se_s += (s.ln() - t).powi(2),
            None => has_scale = false,
        }
    }
    let beta = model.fit.theta.beta();
    let means = &model.basis.x_means;
    let shift: f64 = beta.iter().zip(means).skip(1).map(|(b, m)| b * m).sum();
    let beta_err2 = beta
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let raw = if k == 0 { b - shift } else { *b };
            (raw - sc.gamma.beta[k]).powi(2)
        })
        .sum();
    let gp = grid.len() as f64;
    Some(RateRep {
        n: sample.n(),
        mse_gamma: se_g / gp,
        mse_scale: has_scale.then_some(se_s / gp),
        beta_err2,
    })
}

/// `(slope, Monte Carlo SE, residual SE)` of `log metric` on `log n`, where
/// each metric is `sqrt(mean e_r)` over replicate squared errors `e_r`.
fn loglog_slope(ns: &[usize], errs: &[Vec<f64>]) -> (f64, f64, Option<f64>) {
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let mut ys = Vec::with_capacity(xs.len());
    let mut vars = Vec::with_capacity(xs.len());
    for e in errs {
        let r = e.len() as f64;
        let mean = e.iter().sum::<f64>() / r;
        let var_e = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
        ys.push(0.5 * mean.ln());
        // delta method: var(log sqrt(mean)) = var(mean) / (4 mean²)
        vars.push(var_e / r / (4.0 * mean * mean));
    }
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum::<f64>() / sxx;
    let mc_var: f64 = xs
        .iter()
        .zip(&vars)
        .map(|(x, v)| ((x - xbar) / sxx).powi(2) * v)
        .sum();
    let reg_se = (xs.len() > 2).then(|| {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - ybar - slope * (x - xbar)).powi(2))
            .sum();
        (rss / (k - 2.0) / sxx).sqrt()
    });
    (slope, mc_var.sqrt(), reg_se)
}

fn check_drops(dropped: usize, total: usize) -> Result<()> {
    if dropped as f64 > MAX_DROP_FRACTION * total as f64 {
        return Err(Error::ExperimentInvalid { dropped, total });
    }
    Ok(())
}

/// For each `n`: generate, threshold, fit with `K = ⌈n^{1/(2m+1)}⌉`, and
/// measure errors on the evaluation grid; then regress log error on log n.
pub fn run_rate_experiment(cfg: &RateConfig) -> Result<RateReport> {
    let sc = &cfg.scenario;
    sc.validate()?;
    if cfg.n_grid.len() < 2 || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("n_grid needs at least two strictly increasing sizes".into()));
    }
    if cfg.reps < 2 {
        return Err(Error::Validation("rate experiments need at least 2 replicates".into()));
    }
    let mut warnings = Vec::new();
    if cfg.reps < 30 {
        warnings.push(format!("reps = {} is below the recommended 30", cfg.reps));
    }
    let grid = eval_grid(sc.p(), sc.d(), GRID_POINTS);
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    let mut errs_target = Vec::new();
    let mut errs_scale = Vec::new();
    let mut dropped_total = 0;
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let knots = ModelSpec::default_knots(n, cfg.m);
        let spec = model_spec(sc, n, knots, cfg.m, &cfg.smoothing, cfg.reparam);
        spec.validate()?;
        let big_n = sc.total_for(n)?;
        let base = (gi * cfg.reps) as u64;
        let reps: Vec<Option<RateRep>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| rate_rep(sc, &spec, big_n, sc.seed, base + r as u64, &grid))
            .collect();
        let kept: Vec<RateRep> = reps.into_iter().flatten().collect();
        let dropped = cfg.reps - kept.len();
        dropped_total += dropped;
        if kept.len() < 2 {
            return Err(Error::ExperimentInvalid {
                dropped,
                total: cfg.reps,
            });
        }
        let r = kept.len() as f64;
        let mean = |f: &dyn Fn(&RateRep) -> f64| kept.iter().map(f).sum::<f64>() / r;
        let scale: Option<Vec<f64>> = kept.iter().map(|k| k.mse_scale).collect();
        rows.push(RateRow {
            n,
            knots,
            lambda: spec.lambda,
            nu: spec.nu,
            reps_used: kept.len(),
            dropped,
            mean_exceedances: mean(&|k| k.n as f64),
            rmse_gamma: mean(&|k| k.mse_gamma).sqrt(),
            rmse_scale: scale.as_ref().map(|s| (s.iter().sum::<f64>() / r).sqrt()),
            beta_error: mean(&|k| k.beta_err2).sqrt(),
        });
        errs_target.push(match cfg.target {
            RateTarget::Smooth => kept.iter().map(|k| k.mse_gamma).collect(),
            RateTarget::Parametric => kept.iter().map(|k| k.beta_err2).collect::<Vec<_>>(),
        });
        errs_scale.push(scale);
    }
    check_drops(dropped_total, cfg.reps * cfg.n_grid.len())?;
    let (slope, slope_se, regression_se) = loglog_slope(&cfg.n_grid, &errs_target);
    let slope_scale = errs_scale
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .map(|e| loglog_slope(&cfg.n_grid, &e).0);
    let m = cfg.m as f64;
    let (expected_slope, default_band) = match cfg.target {
        RateTarget::Smooth => {
            let e = -m / (2.0 * m + 1.0);
            (e, [e - 0.15, e + 0.15])
        }
        RateTarget::Parametric => (-0.5, [-0.6, -0.4]),
    };
    let band = cfg.band.unwrap_or(default_band);
    Ok(RateReport {
        target: cfg.target,
        m: cfg.m,
        reps: cfg.reps,
        seed: sc.seed,
        reparam: cfg.reparam,
        rows,
        slope,
        slope_se,
        regression_se,
        slope_scale,
        expected_slope,
        band,
        pass: slope >= band[0] && slope <= band[1],
        warnings,
    })
}

fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (mean, var, m3 / m2.powf(1.5))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Standardized `γ̂` at a fixed point across replicates, interval coverage
/// and the `γ̂`/log-scale correlation.
pub fn run_normality_experiment(cfg: &NormalityConfig) -> Result<NormalityReport> {
    let sc = &cfg.scenario;
    sc.validate()?;
    if !matches!(sc.family, super::Family::ExactGpd { .. }) {
        return Err(Error::Validation(
            "normality experiments need an exact-gpd scenario (no tail-approximation bias)".into(),
        ));
    }
    if cfg.x.len() + 1 != sc.p() || cfg.z.len() != sc.d() {
        return Err(Error::Dimension(format!(
            "evaluation point needs {} x and {} z values",
            sc.p() - 1,
            sc.d()
        )));
    }
    if cfg.reps < 3 {
        return Err(Error::Validation("normality experiments need at least 3 replicates".into()));
    }
    let mut warnings = Vec::new();
    if cfg.reps < 300 {
        warnings.push(format!("reps = {} is below the recommended 300", cfg.reps));
    }
    let knots = cfg.knots.unwrap_or_else(|| ModelSpec::default_knots(cfg.n, cfg.m));
    let spec = model_spec(sc, cfg.n, knots, cfg.m, &cfg.smoothing, cfg.reparam);
    spec.validate()?;
    let big_n = sc.total_for(cfg.n)?;
    let xi = with_intercept(&cfg.x);
    let gamma_true = sc.gamma_at(&xi, &cfg.z);
    let q90 = normal_quantile(0.90)?;
    let q95 = normal_quantile(0.95)?;
    let outcomes: Vec<Option<RepRecord>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(sc.seed, r as u64);
            let sample = sc.exceedances_with(big_n, &mut rng).ok()?;
            let model = FittedModel::fit_sample(&spec, &sample, &FitConfig::default()).ok()?;
            if !model.fit.converged {
                return None;
            }
            let ci = model.interval(&cfg.x, &cfg.z, 0.95).ok()?;
            let zg = (ci.gamma_hat - gamma_true) / ci.se_gamma;
            Some(RepRecord {
                rep: r,
                n: sample.n(),
                gamma_hat: ci.gamma_hat,
                se_gamma: ci.se_gamma,
                log_scale_hat: ci.scale_hat.ln(),
                se_log_scale: ci.se_scale_rel,
                z_gamma: zg,
                covered90: zg.abs() <= q90,
                covered95: zg.abs() <= q95,
            })
        })
        .collect();
    let records: Vec<RepRecord> = outcomes.into_iter().flatten().collect();
    let dropped = cfg.reps - records.len();
    check_drops(dropped, cfg.reps)?;
    let used = records.len() as f64;
    let zs: Vec<f64> = records.iter().map(|r| r.z_gamma).collect();
    let (mean_z, var_z, skew_z) = moments(&zs);
    let gh: Vec<f64> = records.iter().map(|r| r.gamma_hat).collect();
    let ls: Vec<f64> = records.iter().map(|r| r.log_scale_hat).collect();
    let corr = correlation(&gh, &ls);
    let (_, mc_var_gamma, _) = moments(&gh);
    let mean_plugin_var_gamma = records.iter().map(|r| r.se_gamma.powi(2)).sum::<f64>() / used;
    let coverage90 = records.iter().filter(|r| r.covered90).count() as f64 / used;
    let coverage95 = records.iter().filter(|r| r.covered95).count() as f64 / used;
    let var_band = [0.8, 1.25];
    let coverage95_band = [0.91, 0.99];
    let max_abs_corr = 0.1;
    let pass = var_z >= var_band[0]
        && var_z <= var_band[1]
        && coverage95 >= coverage95_band[0]
        && coverage95 <= coverage95_band[1]
        && (!cfg.reparam || corr.abs() <= max_abs_corr);
    Ok(NormalityReport {
        n: cfg.n,
        knots,
        reps: cfg.reps,
        reps_used: records.len(),
        dropped,
        seed: sc.seed,
        reparam: cfg.reparam,
        x: cfg.x.clone(),
        z: cfg.z.clone(),
        gamma_true,
        mean_z,
        var_z,
        skew_z,
        coverage90,
        coverage95,
        corr_gamma_log_scale: corr,
        mc_var_gamma,
        mean_plugin_var_gamma,
        var_band,
        coverage95_band,
        max_abs_corr,
        pass,
        warnings,
        records,
    })
}
