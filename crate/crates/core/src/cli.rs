//! Command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 fit written but not converged, 3
//! verification report written but outside its acceptance band.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::design::ModelSpec;
use crate::error::{Error, Result};
use crate::fitter::{prepare, select_smoothing, FitConfig};
use crate::model::{write_atomic, write_predictions, FittedModel};
use crate::pot::{apply_threshold, RawTable, ThresholdSpec};
use crate::simlab::{
    oracle_fisher, run_normality_experiment, run_rate_experiment, NormalityConfig,
    RateConfig, Scenario, DEFAULT_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_BAND_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tailgam", version, about = "Generalized Pareto additive models for threshold exceedances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold a CSV, fit the additive GPD model and write model JSON.
    Fit(FitArgs),
    /// Pointwise estimates and confidence intervals for new covariate rows.
    Predict(PredictArgs),
    /// Draw a dataset from a scenario JSON file.
    Simulate(SimulateArgs),
    /// Run a rate-of-convergence experiment from a config JSON file.
    VerifyRate(VerifyArgs),
    /// Run a local normality / coverage experiment from a config JSON file.
    VerifyNormality(VerifyArgs),
    /// Monte Carlo Fisher information against the closed forms.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// `const:<w>`, `quantile:<a>` or `column:<name>`.
    #[arg(long)]
    pub threshold: ThresholdSpec,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected number of smooth covariates (checked against the CSV).
    #[arg(long)]
    pub d: Option<usize>,
    /// Interior knots; defaults to ceil(n^(1/(2m+1))).
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// Comma-separated values tried for lambda = nu on a held-out split;
    /// overrides --lambda and --nu.
    #[arg(long, value_delimiter = ',')]
    pub smoothing_grid: Option<Vec<f64>>,
    /// Fit (gamma, log varsigma) with varsigma = sigma (gamma + 1).
    #[arg(long)]
    pub reparam: bool,
    #[arg(long)]
    pub no_center_x: bool,
    /// Min-max rescale smooth covariates instead of requiring [0, 1].
    #[arg(long)]
    pub rescale_z: bool,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Total sample size N.
    #[arg(long)]
    pub n_total: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Overrides the configured CSV report path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Overrides the configured JSON summary path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "gamma", value_delimiter = ',', allow_negative_numbers = true, default_values_t = vec![-0.2, 0.0, 0.5, 1.0])]
    pub gammas: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Scores of the orthogonal family `(gamma, log varsigma)`.
    #[arg(long)]
    pub ortho: bool,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::VerifyRate(a) => cmd_verify_rate(&a),
        Command::VerifyNormality(a) => cmd_verify_normality(&a),
        Command::Oracle(a) => cmd_oracle(&a),
    }
}

fn fit_config(a: &FitArgs) -> Result<FitConfig> {
    if a.max_iter == 0 || !(a.grad_tol > 0.0) {
        return Err(Error::Validation("--max-iter and --grad-tol must be positive".into()));
    }
    Ok(FitConfig {
        max_iter: a.max_iter,
        grad_tol: a.grad_tol,
        ..FitConfig::default()
    })
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    // flag validation before touching the data
    let mut spec = ModelSpec::new(1, a.d.unwrap_or(1), a.knots.unwrap_or(1));
    spec.degree = a.degree;
    spec.m = a.m;
    spec.lambda = a.lambda;
    spec.nu = a.nu;
    spec.reparam = a.reparam;
    spec.center_x = !a.no_center_x;
    spec.rescale_z = a.rescale_z;
    spec.validate()?;
    if let Some(grid) = &a.smoothing_grid {
        if grid.is_empty() || grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("--smoothing-grid values must be finite and >= 0".into()));
        }
    }
    let config = fit_config(a)?;

    let raw = RawTable::read_csv_path(&a.input)?;
    if let Some(d) = a.d {
        if raw.num_z() != d {
            return Err(Error::Schema(format!(
                "--d {d} but the input has {} z columns",
                raw.num_z()
            )));
        }
    }
    let sample = apply_threshold(&raw, &a.threshold)?;
    spec.p = sample.p();
    spec.d = sample.d();
    spec.knots = a.knots.unwrap_or_else(|| ModelSpec::default_knots(sample.n(), spec.m));
    if let Some(grid) = &a.smoothing_grid {
        let pairs: Vec<(f64, f64)> = grid.iter().map(|v| (*v, *v)).collect();
        let (s, basis, _) = prepare(&spec, &sample)?;
        let ((lambda, nu), scores) = select_smoothing(&s, &basis, &sample, &pairs, &config)?;
        for ((l, _), sc) in pairs.iter().zip(&scores) {
            println!("smoothing {l:e}: held-out log-likelihood {sc:.4}");
        }
        spec.lambda = lambda;
        spec.nu = nu;
    }
    let model = FittedModel::fit_sample(&spec, &sample, &config)?;
    model.save(&a.out)?;
    let f = &model.fit;
    println!(
        "n = {} of N = {} (fraction {:.4}), K = {}, lambda = {}, nu = {}",
        model.training.n,
        model.training.big_n,
        model.training.exceedance_fraction,
        model.spec.knots,
        model.spec.lambda,
        model.spec.nu
    );
    println!(
        "converged = {}, iterations = {}, gradient = {:.3e}, objective = {:.6}",
        f.converged, f.iterations, f.final_grad_norm, f.nll
    );
    for w in &f.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if f.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let model = FittedModel::load(&a.model)?;
    let table = RawTable::read_csv(std::fs::File::open(&a.input)?, false)?;
    let preds = model.predict_table(&table, a.level)?;
    let mut buf = Vec::new();
    write_predictions(&preds, model.spec.p - 1, model.spec.d, &mut buf)?;
    write_atomic(&a.out, &buf)?;
    println!("{} predictions written to {}", preds.len(), a.out.display());
    Ok(EXIT_OK)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let mut scenario: Scenario = read_json(&a.scenario)?;
    if let Some(s) = a.seed {
        scenario.seed = s;
    }
    let gen = scenario.generate(a.n_total)?;
    let mut raw = gen.raw;
    raw.extra.insert("gamma_true".into(), gen.gamma_true);
    let mut buf = Vec::new();
    raw.write_csv(&mut buf)?;
    write_atomic(&a.out, &buf)?;
    println!("{} rows written to {}", raw.y.len(), a.out.display());
    Ok(EXIT_OK)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn cmd_verify_rate(a: &VerifyArgs) -> Result<i32> {
    let mut cfg: RateConfig = read_json(&a.config)?;
    if let Some(s) = a.seed {
        cfg.scenario.seed = s;
    }
    if a.csv.is_some() {
        cfg.output.csv = a.csv.clone();
    }
    if a.json.is_some() {
        cfg.output.json = a.json.clone();
    }
    let report = with_threads(a.threads, || run_rate_experiment(&cfg))??;
    cfg.write_reports(&report)?;
    println!("{:>7} {:>3} {:>5} {:>12} {:>12} {:>12}", "n", "K", "drop", "rmse_gamma", "rmse_scale", "beta_error");
    for r in &report.rows {
        let scale = r.rmse_scale.map_or("-".to_string(), |v| format!("{v:.6}"));
        println!(
            "{:>7} {:>3} {:>5} {:>12.6} {:>12} {:>12.6}",
            r.n, r.knots, r.dropped, r.rmse_gamma, scale, r.beta_error
        );
    }
    println!(
        "slope = {:.4} (MC se {:.4}), expected {:.4}, band [{}, {}]: {}",
        report.slope,
        report.slope_se,
        report.expected_slope,
        report.band[0],
        report.band[1],
        if report.pass { "PASS" } else { "FAIL" }
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_BAND_FAILURE })
}

pub fn cmd_verify_normality(a: &VerifyArgs) -> Result<i32> {
    let mut cfg: NormalityConfig = read_json(&a.config)?;
    if let Some(s) = a.seed {
        cfg.scenario.seed = s;
    }
    if a.csv.is_some() {
        cfg.output.csv = a.csv.clone();
    }
    if a.json.is_some() {
        cfg.output.json = a.json.clone();
    }
    let r = with_threads(a.threads, || run_normality_experiment(&cfg))??;
    cfg.write_reports(&r)?;
    println!(
        "n = {}, K = {}, reps used {}/{}, gamma_true = {:.4}",
        r.n, r.knots, r.reps_used, r.reps, r.gamma_true
    );
    println!(
        "standardized gamma: mean {:.4}, variance {:.4} (band [{}, {}]), skewness {:.4}",
        r.mean_z, r.var_z, r.var_band[0], r.var_band[1], r.skew_z
    );
    println!(
        "coverage: 90% {:.4}, 95% {:.4} (band [{}, {}])",
        r.coverage90, r.coverage95, r.coverage95_band[0], r.coverage95_band[1]
    );
    println!(
        "corr(gamma_hat, log scale_hat) = {:.4}{}",
        r.corr_gamma_log_scale,
        if r.reparam { format!(" (limit {})", r.max_abs_corr) } else { String::new() }
    );
    println!("{}", if r.pass { "PASS" } else { "FAIL" });
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if r.pass { EXIT_OK } else { EXIT_BAND_FAILURE })
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<i32> {
    let results = with_threads(a.threads, || {
        a.gammas
            .iter()
            .map(|g| oracle_fisher(*g, a.draws, a.seed, a.ortho))
            .collect::<Result<Vec<_>>>()
    })??;
    println!(
        "{:>7} {:>6} {:>12} {:>12} {:>12} {:>10}",
        "gamma", "entry", "monte_carlo", "stderr", "closed_form", "rel_err"
    );
    for o in &results {
        for (name, r, c) in [("11", 0, 0), ("12", 0, 1), ("22", 1, 1)] {
            let closed = o.closed_form[r][c];
            let rel = if closed != 0.0 {
                format!("{:.2e}", ((o.mean[r][c] - closed) / closed).abs())
            } else {
                "-".into()
            };
            println!(
                "{:>7} {:>6} {:>12.6} {:>12.2e} {:>12.6} {:>10}",
                o.gamma, name, o.mean[r][c], o.stderr[r][c], closed, rel
            );
        }
    }
    Ok(EXIT_OK)
}
