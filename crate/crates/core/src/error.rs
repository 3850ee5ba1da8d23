use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{what} = {value} is outside the admissible domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("derivative order m = {m} is not admissible for spline degree {degree}")]
    Order { m: usize, degree: usize },

    /// The covariate sample cannot support the requested knot grid.
    #[error("degenerate covariate sample: {0}")]
    DegenerateSample(String),

    #[error("observation y = {y} is outside the GPD support for gamma = {gamma}, scale = {scale}")]
    Support { gamma: f64, scale: f64, y: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Fisher information does not exist for gamma <= -1/2.
    #[error("Fisher information does not exist for gamma = {gamma} (requires gamma > -1/2)")]
    NonExistence { gamma: f64 },

    #[error("empty exceedance sample: {0}")]
    EmptySample(String),

    #[error("scale overflow: linear predictor {eta} exceeds the exponent range")]
    ScaleOverflow { eta: f64 },

    #[error("singular fit: penalized Hessian smallest eigenvalue {min_eigenvalue:e} after ridge escalation")]
    SingularFit { min_eigenvalue: f64 },

    #[error("inference unavailable: penalized Hessian smallest eigenvalue {min_eigenvalue:e}")]
    InferenceUnavailable { min_eigenvalue: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("CSV error at line {line}, column '{column}': {message}")]
    Csv {
        line: usize,
        column: String,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("experiment invalid: {dropped} of {total} fits failed to converge")]
    ExperimentInvalid { dropped: usize, total: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Csv {
            line,
            column: String::new(),
            message: err.to_string(),
        }
    }
}
