//! Monte Carlo Fisher information: mean outer product of analytic scores
//! over exact GPD draws.
//!
//! Draws come in independent batches. Each batch is a stratified sample on
//! `t = 1 − u`: stratum `k` covers `[2^{−k−1}, 2^{−k})` (the last one reaches
//! down to 0) and gets a share of draws proportional to `√P_k`, so the upper
//! tail, where squared scores grow without bound for `γ < 0`, is sampled
//! densely. Inside a stratum the draws are again one per equal sub-cell. The
//! batch estimate is `Σ_k P_k · mean_k`; standard errors come from the spread
//! of batch estimates.

use rand_distr::{Distribution, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{
    fisher_info, fisher_info_ortho, gpd_sample_upper, score_gamma, score_gamma_ortho, score_logsigma,
    score_logvarsigma, GpdOrthoPoint, GpdPoint,
};

use super::replicate_rng;

/// Independent stratified batches.
const BATCHES: usize = 32;
/// Dyadic strata in `1 − u`.
const STRATA: usize = 40;
/// Floor on draws per stratum.
const MIN_PER_STRATUM: usize = 2;

/// `(t_lo, t_hi, draws)` per stratum for a batch of `len` draws.
fn allocate(len: usize) -> Vec<(f64, f64, usize)> {
    let weights: Vec<f64> = (0..STRATA).map(|k| 0.5f64.powi(k as i32 + 1).sqrt()).collect();
    let total: f64 = weights.iter().sum();
    let spare = len - STRATA * MIN_PER_STRATUM;
    let mut counts: Vec<usize> =
        weights.iter().map(|w| MIN_PER_STRATUM + (spare as f64 * w / total) as usize).collect();
    counts[0] += len - counts.iter().sum::<usize>();
    (0..STRATA)
        .map(|k| {
            let hi = 0.5f64.powi(k as i32);
            let lo = if k + 1 == STRATA { 0.0 } else { hi / 2.0 };
            (lo, hi, counts[k])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherOracle {
    pub gamma: f64,
    pub ortho: bool,
    pub draws: usize,
    pub mean: [[f64; 2]; 2],
    pub stderr: [[f64; 2]; 2],
    pub closed_form: [[f64; 2]; 2],
}

impl FisherOracle {
    /// Largest `|mean − closed|/|closed|` over entries with nonzero closed
    /// form.
    pub fn max_rel_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let t = self.closed_form[r][c];
                if t != 0.0 {
                    worst = worst.max(((self.mean[r][c] - t) / t).abs());
                }
            }
        }
        worst
    }
}

/// Scores at `σ = 1` (or `ς = 1`), which suffices since the information in
/// `(γ, log σ)` does not depend on the scale.
pub fn oracle_fisher(gamma: f64, draws: usize, seed: u64, ortho: bool) -> Result<FisherOracle> {
    if !(gamma > -0.5) {
        return Err(Error::NonExistence { gamma });
    }
    let min_draws = BATCHES * STRATA * MIN_PER_STRATUM * 2;
    if draws < min_draws {
        return Err(Error::Validation(format!("oracle needs at least {min_draws} draws")));
    }
    let closed_form = if ortho { fisher_info_ortho(gamma)? } else { fisher_info(gamma)? };
    let plain = GpdPoint::new(gamma, if ortho { 1.0 / (1.0 + gamma) } else { 1.0 })?;
    let op = GpdOrthoPoint::new(gamma, 1.0)?;
    let batch_means: Vec<Result<[f64; 3]>> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(seed, b as u64);
            let len = draws / BATCHES + usize::from(b < draws % BATCHES);
            let mut est = [0.0; 3];
            for (lo, hi, count) in allocate(len) {
                let mut sum = [0.0; 3];
                for j in 0..count {
                    let v: f64 = Open01.sample(&mut rng);
                    let t = lo + (hi - lo) * (j as f64 + v) / count as f64;
                    let y = gpd_sample_upper(&plain, t);
                    let (a, c) = if ortho {
                        (score_gamma_ortho(&op, y)?, score_logvarsigma(&op, y)?)
                    } else {
                        (score_gamma(&plain, y)?, score_logsigma(&plain, y)?)
                    };
                    sum[0] += a * a;
                    sum[1] += a * c;
                    sum[2] += c * c;
                }
                for k in 0..3 {
                    est[k] += (hi - lo) * sum[k] / count as f64;
                }
            }
            Ok(est)
        })
        .collect();
    let batch_means = batch_means.into_iter().collect::<Result<Vec<_>>>()?;
    let nb = BATCHES as f64;
    let mut mean = [0.0; 3];
    let mut se = [0.0; 3];
    for k in 0..3 {
        mean[k] = batch_means.iter().map(|m| m[k]).sum::<f64>() / nb;
        let var = batch_means.iter().map(|m| (m[k] - mean[k]).powi(2)).sum::<f64>() / (nb - 1.0);
        se[k] = (var / nb).sqrt();
    }
    Ok(FisherOracle {
        gamma,
        ortho,
        draws,
        mean: [[mean[0], mean[1]], [mean[1], mean[2]]],
        stderr: [[se[0], se[1]], [se[1], se[2]]],
        closed_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_closed_form_roughly() {
        let o = oracle_fisher(0.5, 200_000, 1, false).unwrap();
        assert!(o.max_rel_error() < 0.03, "{o:?}");
        let o = oracle_fisher(0.5, 200_000, 1, true).unwrap();
        assert!(o.mean[0][1].abs() < 0.02, "{o:?}");
    }

    #[test]
    fn rejects_nonexistent_information() {
        assert!(oracle_fisher(-0.5, 100, 0, false).is_err());
        assert!(oracle_fisher(0.1, 10, 0, false).is_err());
    }

    #[test]
    fn allocation_covers_unit_interval() {
        for len in [2600, 31_250, 31_251] {
            let a = allocate(len);
            assert_eq!(a.iter().map(|s| s.2).sum::<usize>(), len);
            assert_eq!(a[0].1, 1.0);
            assert_eq!(a[STRATA - 1].0, 0.0);
            for w in a.windows(2) {
                assert_eq!(w[0].0, w[1].1);
            }
        }
    }

    #[test]
    fn seeded_and_chunk_stable() {
        let a = oracle_fisher(0.1, 100_000, 9, false).unwrap();
        let b = oracle_fisher(0.1, 100_000, 9, false).unwrap();
        assert_eq!(a, b);
    }
}
