//! A fitted model bundled with everything needed to predict on new rows, and
//! its self-describing JSON document.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{eval_model, AdditiveBasis, ModelSpec, Theta};
use crate::error::{Error, Result};
use crate::fitter::{fit, prepare, FitConfig, FitResult};
use crate::inference::{interval_from, normal_quantile, HessianInverse, PointwiseCI};
use crate::pot::{ExceedanceSample, RawTable, ThresholdSpec};
use crate::splines::NormalizedBasis;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub threshold: ThresholdSpec,
    pub exceedance_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub nll: f64,
    pub warnings: Vec<String>,
    /// Row-major penalized Hessian.
    pub penalized_hessian: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBasis {
    pub phi: Vec<f64>,
    pub norms: Vec<f64>,
    /// `[min, max]` used for rescaling, when enabled.
    pub z_range: Option<[f64; 2]>,
}

/// On-disk form of [`FittedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub spec: ModelSpec,
    pub knots: Vec<f64>,
    pub covariates: Vec<CovariateBasis>,
    pub x_means: Vec<f64>,
    pub theta: Vec<f64>,
    pub training: TrainingSummary,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub basis: AdditiveBasis,
    pub fit: FitResult,
    pub training: TrainingSummary,
}

/// One prediction row: the covariates it was computed at plus the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub ci: PointwiseCI,
}

impl FittedModel {
    /// Basis construction and fit on an exceedance sample. Warnings from
    /// the sample and from basis construction are merged into the fit.
    pub fn fit_sample(spec: &ModelSpec, sample: &ExceedanceSample, config: &FitConfig) -> Result<Self> {
        let (spec, basis, mut warnings) = prepare(spec, sample)?;
        let mut result = fit(&spec, &basis, sample, config)?;
        warnings.append(&mut result.warnings);
        result.warnings = warnings;
        Ok(Self {
            spec,
            basis,
            fit: result,
            training: TrainingSummary {
                n: sample.n(),
                big_n: sample.big_n,
                threshold: sample.threshold.clone(),
                exceedance_fraction: sample.exceedance_fraction(),
            },
        })
    }

    pub fn theta(&self) -> &Theta {
        &self.fit.theta
    }

    /// `(γ̂, ŝ)` at raw covariates; `x` excludes the intercept.
    pub fn predict_point(&self, x: &[f64], z: &[f64]) -> Result<(f64, f64)> {
        let xi = with_intercept(x);
        eval_model(&self.spec, &self.basis, &self.fit.theta, &xi, z)
    }

    /// Pointwise interval at raw covariates; `x` excludes the intercept.
    pub fn interval(&self, x: &[f64], z: &[f64], level: f64) -> Result<PointwiseCI> {
        let inv = HessianInverse::new(&self.fit)?;
        self.interval_with(&inv, x, z, level)
    }

    fn interval_with(&self, inv: &HessianInverse, x: &[f64], z: &[f64], level: f64) -> Result<PointwiseCI> {
        let xi = with_intercept(x);
        let (gamma, scale) = eval_model(&self.spec, &self.basis, &self.fit.theta, &xi, z)?;
        let row = self.basis.design_row(&xi, z)?;
        interval_from(gamma, scale, &inv.point_covariance(&row), level)
    }

    /// Intervals for every row of `table`. Row failures are collected as
    /// `row i: message` (1-based data rows) and returned together.
    pub fn predict_table(&self, table: &RawTable, level: f64) -> Result<Vec<Prediction>> {
        normal_quantile(level)?;
        if table.is_empty() {
            return Err(Error::EmptySample("prediction table has no rows".into()));
        }
        let px = self.spec.p - 1;
        if table.num_x() != px || table.num_z() != self.spec.d {
            return Err(Error::Schema(format!(
                "model expects columns {} but the table has {} x and {} z columns",
                self.expected_columns().join(", "),
                table.num_x(),
                table.num_z()
            )));
        }
        let inv = HessianInverse::new(&self.fit)?;
        let mut out = Vec::with_capacity(table.len());
        let mut failures = Vec::new();
        for i in 0..table.len() {
            match self.interval_with(&inv, &table.x[i], &table.z[i], level) {
                Ok(ci) => out.push(Prediction {
                    x: table.x[i].clone(),
                    z: table.z[i].clone(),
                    ci,
                }),
                Err(e) => failures.push(format!("row {}: {e}", i + 1)),
            }
        }
        if !failures.is_empty() {
            return Err(Error::Validation(format!(
                "{} of {} prediction rows failed:\n{}",
                failures.len(),
                table.len(),
                failures.join("\n")
            )));
        }
        Ok(out)
    }

    /// Covariate column names, intercept excluded.
    pub fn expected_columns(&self) -> Vec<String> {
        (1..self.spec.p)
            .map(|k| format!("x_{k}"))
            .chain((1..=self.spec.d).map(|j| format!("z_{j}")))
            .collect()
    }

    pub fn to_document(&self) -> ModelDocument {
        let h = &self.fit.penalized_hessian;
        let mut hess = Vec::with_capacity(h.len());
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                hess.push(h[(r, c)]);
            }
        }
        let grid_knots = self
            .basis
            .bases
            .first()
            .map(|b| b.grid().knots().to_vec())
            .unwrap_or_default();
        ModelDocument {
            version: MODEL_VERSION,
            spec: self.spec.clone(),
            knots: grid_knots,
            covariates: self
                .basis
                .bases
                .iter()
                .enumerate()
                .map(|(j, b)| CovariateBasis {
                    phi: b.phi().to_vec(),
                    norms: b.norms().to_vec(),
                    z_range: self.basis.z_ranges.as_ref().map(|r| [r[j].0, r[j].1]),
                })
                .collect(),
            x_means: self.basis.x_means.clone(),
            theta: self.fit.theta.as_slice().to_vec(),
            training: self.training.clone(),
            diagnostics: Diagnostics {
                converged: self.fit.converged,
                iterations: self.fit.iterations,
                final_grad_norm: self.fit.final_grad_norm,
                nll: self.fit.nll,
                warnings: self.fit.warnings.clone(),
                penalized_hessian: hess,
            },
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        doc.spec.validate()?;
        let grid = doc.spec.grid()?;
        if grid.knots().len() != doc.knots.len()
            || grid.knots().iter().zip(&doc.knots).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::Schema("stored knots do not match the spec".into()));
        }
        if doc.covariates.len() != doc.spec.d || doc.x_means.len() != doc.spec.p {
            return Err(Error::Schema(format!(
                "expected {} covariate bases and {} x means",
                doc.spec.d, doc.spec.p
            )));
        }
        let bases = doc
            .covariates
            .iter()
            .map(|c| NormalizedBasis::from_parts(grid.clone(), c.phi.clone(), c.norms.clone()))
            .collect::<Result<Vec<_>>>()?;
        let z_ranges = match doc.covariates.iter().map(|c| c.z_range).collect::<Option<Vec<_>>>() {
            Some(r) if doc.spec.rescale_z => Some(r.into_iter().map(|[a, b]| (a, b)).collect()),
            None if !doc.spec.rescale_z => None,
            _ => return Err(Error::Schema("z ranges inconsistent with rescale_z".into())),
        };
        let theta = Theta::from_vec(&doc.spec, doc.theta)?;
        let dim = 2 * doc.spec.block_len();
        let diag = doc.diagnostics;
        if diag.penalized_hessian.len() != dim * dim {
            return Err(Error::Schema(format!(
                "penalized Hessian has {} entries, expected {}",
                diag.penalized_hessian.len(),
                dim * dim
            )));
        }
        Ok(Self {
            basis: AdditiveBasis {
                bases,
                x_means: doc.x_means,
                z_ranges,
            },
            fit: FitResult {
                theta,
                converged: diag.converged,
                iterations: diag.iterations,
                final_grad_norm: diag.final_grad_norm,
                penalized_hessian: DMatrix::from_row_slice(dim, dim, &diag.penalized_hessian),
                nll: diag.nll,
                warnings: diag.warnings,
                trace: Vec::new(),
                n: doc.training.n,
            },
            spec: doc.spec,
            training: doc.training,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn with_intercept(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(1.0);
    v.extend_from_slice(x);
    v
}

/// Writes via a temporary file in the target directory and renames it into
/// place, so failed runs leave no partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Prediction CSV: `x_…, z_…, gamma_hat, se_gamma, gamma_lo, gamma_hi,
/// scale_hat, scale_lo, scale_hi`.
pub fn write_predictions<W: Write>(preds: &[Prediction], px: usize, d: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=px).map(|k| format!("x_{k}")).collect();
    header.extend((1..=d).map(|j| format!("z_{j}")));
    header.extend(
        ["gamma_hat", "se_gamma", "gamma_lo", "gamma_hi", "scale_hat", "scale_lo", "scale_hi"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for p in preds {
        let c = &p.ci;
        let stats = [
            c.gamma_hat,
            c.se_gamma,
            c.gamma_lo,
            c.gamma_hi,
            c.scale_hat,
            c.scale_lo,
            c.scale_hi,
        ];
        let rec = p.x.iter().chain(&p.z).chain(&stats).map(|v| v.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::{gpd_sample, GpdPoint};
    use rand::{Rng, SeedableRng};

    fn sample(n: usize, seed: u64) -> ExceedanceSample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = GpdPoint::new(0.2, 1.0).unwrap();
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            y.push(gpd_sample(&p, rng.gen()));
            x.push(vec![rng.gen_range(-1.0..1.0)]);
            z.push(vec![rng.gen::<f64>()]);
        }
        ExceedanceSample::from_exceedances(y, x, z).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let smp = sample(400, 3);
        let spec = ModelSpec::new(2, 1, 3);
        let model = FittedModel::fit_sample(&spec, &smp, &FitConfig::default()).unwrap();
        let text = model.to_json().unwrap();
        let back = FittedModel::from_json(&text).unwrap();
        assert_eq!(back.to_document(), model.to_document());
        assert_eq!(back.to_json().unwrap(), text);
        let a = model.interval(&[0.3], &[0.4], 0.9).unwrap();
        let b = back.interval(&[0.3], &[0.4], 0.9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn version_is_checked() {
        let smp = sample(200, 4);
        let model = FittedModel::fit_sample(&ModelSpec::new(2, 1, 2), &smp, &FitConfig::default()).unwrap();
        let mut doc = model.to_document();
        doc.version = 7;
        assert!(matches!(FittedModel::from_document(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn schema_mismatch_lists_columns() {
        let smp = sample(200, 5);
        let model = FittedModel::fit_sample(&ModelSpec::new(2, 1, 2), &smp, &FitConfig::default()).unwrap();
        let table = RawTable::read_csv("z_1\n0.5\n".as_bytes(), false).unwrap();
        let err = model.predict_table(&table, 0.95).unwrap_err().to_string();
        assert!(err.contains("x_1") && err.contains("z_1"), "{err}");
    }
}
