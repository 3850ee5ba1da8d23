//! Penalized maximum likelihood by damped Newton iterations.
//!
//! The objective is `Σ_i −log h(Y_i | γ_i, s_i) + θᵀ Ω_{γ,σ} θ`, where
//! `γ_i = A_iᵀ θ_γ`, `log s_i = A_iᵀ θ_σ` and `s` is `σ` (plain family) or
//! `ς` (orthogonal family). Its Hessian is the observed information plus
//! `2 Ω_{γ,σ}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{build_penalty_block, AdditiveBasis, ModelSpec, Theta};
use crate::error::{Error, Result};
use crate::gpd::{nll_derivs, ortho_nll_derivs, NllDerivs};
use crate::pot::ExceedanceSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitRule {
    /// `u_1 = log(mean Y)`, `β_1 = 0.1`, everything else 0.
    Default,
    /// Warm start from the given coefficient vector.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Bound on `max_k |∂ℓ_pen/∂θ_k| / n`.
    pub grad_tol: f64,
    pub step_halving_max: usize,
    pub init: InitRule,
    /// Initial diagonal regularization of the Newton system.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_halving_max: 30,
            init: InitRule::Default,
            ridge: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: Theta,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Hessian of the penalized objective at `theta` (no ridge).
    pub penalized_hessian: DMatrix<f64>,
    /// Final penalized objective.
    pub nll: f64,
    pub warnings: Vec<String>,
    /// Objective value after every accepted step, starting at the initial point.
    pub trace: Vec<f64>,
    pub n: usize,
}

/// Fitted shapes must stay above this at every observation; below it the
/// likelihood is unbounded as the endpoint approaches the sample maximum.
pub const MIN_SHAPE: f64 = -1.0;

/// Precomputed pieces of the penalized objective for one dataset.
#[derive(Debug, Clone)]
pub struct Objective {
    design: DMatrix<f64>,
    y: Vec<f64>,
    omega: DMatrix<f64>,
    reparam: bool,
}

impl Objective {
    pub fn new(spec: &ModelSpec, basis: &AdditiveBasis, sample: &ExceedanceSample) -> Result<Self> {
        Ok(Self {
            design: basis.design_matrix(sample)?,
            y: sample.y.clone(),
            omega: build_penalty_block(spec, basis)?,
            reparam: spec.reparam,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.omega
    }

    fn derivs(&self, gamma: f64, eta: f64, y: f64) -> Option<NllDerivs> {
        if gamma <= MIN_SHAPE {
            return None;
        }
        if self.reparam {
            ortho_nll_derivs(gamma, eta, y)
        } else {
            nll_derivs(gamma, eta, y)
        }
    }

    /// Shape and log-scale linear predictors at every observation.
    pub fn predictors(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let q = self.design.ncols();
        let tg = DVector::from_column_slice(&theta[..q]);
        let ts = DVector::from_column_slice(&theta[q..]);
        (&self.design * tg, &self.design * ts)
    }

    fn penalty_value(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        t.dot(&(&self.omega * &t))
    }

    /// Penalized objective; `+∞` when any observation leaves the support.
    pub fn value(&self, theta: &[f64]) -> f64 {
        let (g, e) = self.predictors(theta);
        let mut total = 0.0;
        for i in 0..self.n() {
            match self.derivs(g[i], e[i], self.y[i]) {
                Some(d) => total += d.value,
                None => return f64::INFINITY,
            }
        }
        total + self.penalty_value(theta)
    }

    /// Objective and gradient, or `None` if infeasible.
    pub fn gradient(&self, theta: &[f64]) -> Option<(f64, DVector<f64>)> {
        let (value, grad, _) = self.evaluate(theta, false)?;
        Some((value, grad))
    }

    /// Objective, gradient and Hessian, or `None` if infeasible.
    pub fn hessian(&self, theta: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let (v, g, h) = self.evaluate(theta, true)?;
        Some((v, g, h.expect("requested")))
    }

    fn evaluate(
        &self,
        theta: &[f64],
        want_hessian: bool,
    ) -> Option<(f64, DVector<f64>, Option<DMatrix<f64>>)> {
        let n = self.n();
        let q = self.design.ncols();
        let (g, e) = self.predictors(theta);
        let mut value = 0.0;
        let mut w_g = DVector::zeros(n);
        let mut w_e = DVector::zeros(n);
        let mut w_gg = DVector::zeros(n);
        let mut w_ge = DVector::zeros(n);
        let mut w_ee = DVector::zeros(n);
        for i in 0..n {
            let d = self.derivs(g[i], e[i], self.y[i])?;
            value += d.value;
            w_g[i] = d.d_gamma;
            w_e[i] = d.d_eta;
            w_gg[i] = d.d_gamma_gamma;
            w_ge[i] = d.d_gamma_eta;
            w_ee[i] = d.d_eta_eta;
        }
        let t = DVector::from_column_slice(theta);
        let om_t = &self.omega * &t;
        value += t.dot(&om_t);
        let mut grad = DVector::zeros(2 * q);
        grad.rows_mut(0, q).copy_from(&self.design.tr_mul(&w_g));
        grad.rows_mut(q, q).copy_from(&self.design.tr_mul(&w_e));
        grad += 2.0 * om_t;
        if !want_hessian {
            return Some((value, grad, None));
        }
        let weighted = |w: &DVector<f64>| {
            let mut wa = self.design.clone();
            for (i, mut row) in wa.row_iter_mut().enumerate() {
                row *= w[i];
            }
            self.design.tr_mul(&wa)
        };
        let hgg = weighted(&w_gg);
        let hge = weighted(&w_ge);
        let hee = weighted(&w_ee);
        let mut hess = DMatrix::zeros(2 * q, 2 * q);
        hess.view_mut((0, 0), (q, q)).copy_from(&hgg);
        hess.view_mut((0, q), (q, q)).copy_from(&hge);
        hess.view_mut((q, 0), (q, q)).copy_from(&hge.transpose());
        hess.view_mut((q, q), (q, q)).copy_from(&hee);
        hess += 2.0 * &self.omega;
        let hess = (&hess + hess.transpose()) * 0.5;
        Some((value, grad, Some(hess)))
    }
}

/// Penalized negative log-likelihood at `theta`; `+∞` if any observation is
/// outside the support.
pub fn penalized_nll(
    spec: &ModelSpec,
    basis: &AdditiveBasis,
    theta: &Theta,
    data: &ExceedanceSample,
) -> Result<f64> {
    Ok(Objective::new(spec, basis, data)?.value(theta.as_slice()))
}

/// `u_1 = log(mean Y)`, `β_1 = 0.1`, other entries 0; `β_1` is halved until
/// every observation lies in the support.
pub fn initialize_theta(spec: &ModelSpec, data: &ExceedanceSample) -> Result<Theta> {
    if data.n() == 0 {
        return Err(Error::EmptySample("cannot initialize on an empty sample".into()));
    }
    let mut theta = Theta::zeros(spec);
    theta.u_mut()[0] = data.mean_y().ln();
    theta.beta_mut()[0] = 0.1;
    let feasible = |t: &Theta| {
        data.y.iter().all(|&y| {
            let g = t.beta()[0];
            let e = t.u()[0];
            if spec.reparam {
                ortho_nll_derivs(g, e, y).is_some()
            } else {
                nll_derivs(g, e, y).is_some()
            }
        })
    };
    for _ in 0..60 {
        if feasible(&theta) {
            return Ok(theta);
        }
        theta.beta_mut()[0] *= 0.5;
    }
    theta.beta_mut()[0] = 0.0;
    Ok(theta)
}

fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    h.clone().symmetric_eigenvalues().min()
}

const MAX_RIDGE_ESCALATIONS: usize = 30;

/// Minimizes the penalized objective by damped Newton steps.
pub fn fit(
    spec: &ModelSpec,
    basis: &AdditiveBasis,
    data: &ExceedanceSample,
    config: &FitConfig,
) -> Result<FitResult> {
    spec.validate()?;
    if data.n() == 0 {
        return Err(Error::EmptySample("no exceedances to fit".into()));
    }
    let objective = Objective::new(spec, basis, data)?;
    let mut theta = match &config.init {
        InitRule::Default => initialize_theta(spec, data)?,
        InitRule::Given(v) => Theta::from_vec(spec, v.clone())?,
    };
    let n = data.n();
    let nf = n as f64;
    let (mut obj, mut grad, mut hess) = objective.hessian(theta.as_slice()).ok_or_else(|| {
        Error::Validation("initial coefficients put observations outside the GPD support".into())
    })?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let dim = objective.dim();

    for iter in 0..config.max_iter {
        let gnorm = grad.amax() / nf;
        if gnorm <= config.grad_tol {
            converged = true;
            break;
        }
        iterations = iter + 1;
        let mut ridge = config.ridge;
        let mut accepted = None;
        let mut factorized = false;
        for _ in 0..MAX_RIDGE_ESCALATIONS {
            let mut m = hess.clone();
            for k in 0..dim {
                m[(k, k)] += ridge;
            }
            let Some(chol) = m.cholesky() else {
                ridge = (ridge * 10.0).max(1e-12);
                continue;
            };
            factorized = true;
            let delta = -chol.solve(&grad);
            let mut step = 1.0;
            for _ in 0..=config.step_halving_max {
                let cand: Vec<f64> = theta
                    .as_slice()
                    .iter()
                    .zip(delta.iter())
                    .map(|(t, d)| t + step * d)
                    .collect();
                if let Some((v, g, h)) = objective.hessian(&cand) {
                    let decreased = v < obj;
                    // roundoff-level ties are accepted only if they improve stationarity
                    let tie = v - obj <= 1e-13 * obj.abs().max(1.0) && g.amax() < grad.amax();
                    if decreased || tie {
                        accepted = Some((cand, v, g, h));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            ridge = (ridge * 100.0).max(1e-8 * hess.diagonal().amax().max(1.0));
        }
        match accepted {
            Some((cand, v, g, h)) => {
                theta = Theta::from_vec(spec, cand)?;
                obj = v;
                grad = g;
                hess = h;
                trace.push(obj);
            }
            None if !factorized => {
                return Err(Error::SingularFit {
                    min_eigenvalue: min_eigenvalue(&hess),
                })
            }
            None => break,
        }
    }
    if !converged && grad.amax() / nf <= config.grad_tol {
        converged = true;
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "Newton iterations stopped after {iterations} steps without reaching grad_tol = {:e}",
            config.grad_tol
        ));
    }
    let recommended = 10 * spec.block_len();
    if n < recommended {
        warnings.push(format!(
            "n = {n} is below the recommended 10 x (p + d(K+xi)) = {recommended}"
        ));
    }
    let (g, _) = objective.predictors(theta.as_slice());
    let min_gamma = g.min();
    let bound = -(spec.m as f64) / (2 * spec.m + 1) as f64;
    if min_gamma < bound {
        warnings.push(format!(
            "fitted shape reaches {min_gamma:.3} on the training data, below the bound \
             gamma > -m/(2m+1) = {bound:.3} required by the asymptotic theory"
        ));
    }
    Ok(FitResult {
        theta,
        converged,
        iterations,
        final_grad_norm: grad.amax() / nf,
        penalized_hessian: hess,
        nll: obj,
        warnings,
        trace,
        n,
    })
}

/// Builds the basis for `spec`, lowering `K` one knot at a time (with a
/// warning) when a raw basis has an empty support on the sample.
pub fn prepare(
    spec: &ModelSpec,
    sample: &ExceedanceSample,
) -> Result<(ModelSpec, AdditiveBasis, Vec<String>)> {
    let mut spec = spec.clone();
    let mut warnings = sample.warnings();
    loop {
        match AdditiveBasis::from_sample(&spec, sample) {
            Ok(basis) => return Ok((spec, basis, warnings)),
            Err(Error::DegenerateSample(msg))
                if spec.knots > 1 && !msg.contains("cannot be rescaled") =>
            {
                warnings.push(format!(
                    "{msg}; dropping to K = {} interior knots",
                    spec.knots - 1
                ));
                spec.knots -= 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Held-out predictive score of each `(λ, ν)` pair: the model is fitted on
/// four fifths of the sample (every fifth observation held out) and scored
/// by the held-out log-likelihood. Returns the best pair and all scores.
pub fn select_smoothing(
    spec: &ModelSpec,
    basis: &AdditiveBasis,
    sample: &ExceedanceSample,
    grid: &[(f64, f64)],
    config: &FitConfig,
) -> Result<((f64, f64), Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::Validation("smoothing grid is empty".into()));
    }
    let train = sample.subset(|i| i % 5 != 4);
    let test = sample.subset(|i| i % 5 == 4);
    if test.n() == 0 {
        return Err(Error::EmptySample("too few observations for a held-out split".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &(lambda, nu) in grid {
        let mut s = spec.clone();
        s.lambda = lambda;
        s.nu = nu;
        let score = match fit(&s, basis, &train, config) {
            Ok(res) => {
                let mut unpenalized = s.clone();
                unpenalized.lambda = 0.0;
                unpenalized.nu = 0.0;
                let held = Objective::new(&unpenalized, basis, &test)?;
                -held.value(res.theta.as_slice())
            }
            Err(_) => f64::NEG_INFINITY,
        };
        scores.push(score);
    }
    let best = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| grid[i])
        .expect("nonempty grid");
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sample() -> ExceedanceSample {
        ExceedanceSample::from_exceedances(vec![1.0], vec![vec![]], vec![vec![0.5]]).unwrap()
    }

    #[test]
    fn single_observation_exponential() {
        let spec = ModelSpec::new(1, 1, 1);
        let smp = tiny_sample();
        let basis = AdditiveBasis {
            bases: vec![crate::splines::NormalizedBasis::from_parts(
                spec.grid().unwrap(),
                vec![0.1; 5],
                vec![1.0; 4],
            )
            .unwrap()],
            x_means: vec![0.0],
            z_ranges: None,
        };
        let v = penalized_nll(&spec, &basis, &Theta::zeros(&spec), &smp).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn initial_point_rule() {
        let spec = ModelSpec::new(1, 1, 2);
        let smp = ExceedanceSample::from_exceedances(
            vec![1.0, 3.0],
            vec![vec![], vec![]],
            vec![vec![0.2], vec![0.8]],
        )
        .unwrap();
        let t = initialize_theta(&spec, &smp).unwrap();
        assert!((t.u()[0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(t.beta()[0], 0.1);
        assert!(t.b().iter().chain(t.c()).all(|&v| v == 0.0));
    }

    #[test]
    fn infeasible_value_is_infinite() {
        let spec = ModelSpec::new(1, 1, 1);
        let smp = ExceedanceSample::from_exceedances(vec![5.0], vec![vec![]], vec![vec![0.5]]).unwrap();
        let basis = AdditiveBasis {
            bases: vec![crate::splines::NormalizedBasis::from_parts(
                spec.grid().unwrap(),
                vec![0.1; 5],
                vec![1.0; 4],
            )
            .unwrap()],
            x_means: vec![0.0],
            z_ranges: None,
        };
        let mut t = Theta::zeros(&spec);
        t.beta_mut()[0] = -0.5;
        assert_eq!(penalized_nll(&spec, &basis, &t, &smp).unwrap(), f64::INFINITY);
    }
}
