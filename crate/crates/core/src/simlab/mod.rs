//! Monte Carlo laboratory: scenario generators with known truths, rate and
//! normality experiments, and a Fisher-information oracle.
//!
//! Replicate `r` of an experiment with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(splitmix64(s + r))`, so the data of each
//! replicate are independent of scheduling and serial and parallel runs
//! agree bit for bit.

mod experiment;
mod oracle;
mod scenario;

pub use experiment::{
    eval_grid, run_normality_experiment, run_rate_experiment, ExperimentConfig, NormalityConfig,
    NormalityReport, OutputPaths, RateConfig, RateReport, RateRow, RateTarget, RepRecord,
    Smoothing,
};
pub use oracle::{oracle_fisher, FisherOracle};
pub use scenario::{AdditiveScale, AdditiveTruth, Family, Generated, Scenario, SignRegime, SmoothFn};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_917;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for replicate `index` under master seed `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(index)))
}
