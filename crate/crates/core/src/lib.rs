//! Additive generalized Pareto regression for conditional extremes.
//!
//! Shape and log-scale are modeled as linear terms in `x` plus penalized
//! normalized B-spline smooths in `z`, fitted by penalized maximum
//! likelihood on threshold exceedances. [`simlab`] generates data with known
//! truths and checks rates, normality and Fisher information by Monte Carlo.

pub mod cli;
pub mod design;
pub mod error;
pub mod fitter;
pub mod gpd;
pub mod inference;
pub mod model;
pub mod pot;
pub mod simlab;
pub mod splines;

pub use design::{AdditiveBasis, ModelSpec, Theta};
pub use error::{Error, Result};
pub use fitter::{fit, FitConfig, FitResult};
pub use inference::PointwiseCI;
pub use model::FittedModel;
pub use pot::{apply_threshold, ExceedanceSample, RawTable, ThresholdSpec};
