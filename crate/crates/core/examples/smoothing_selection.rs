//! Choose a common smoothing parameter by held-out log-likelihood.
//!
//! cargo run --release --example smoothing_selection

use tailgam::fitter::{prepare, select_smoothing, FitConfig};
use tailgam::pot::{apply_threshold, ThresholdSpec};
use tailgam::simlab::{AdditiveScale, AdditiveTruth, Family, Scenario, SignRegime, SmoothFn};
use tailgam::ModelSpec;

fn main() -> tailgam::Result<()> {
    let scenario = Scenario {
        family: Family::ExactGpd { tail_fraction: 1.0 },
        gamma: AdditiveTruth {
            beta: vec![0.3],
            smooths: vec![SmoothFn::Sin { a: 0.2 }],
        },
        scale: AdditiveTruth {
            beta: vec![0.0],
            smooths: vec![SmoothFn::Cos { a: 0.3 }],
        },
        additive_scale: AdditiveScale::Sigma,
        threshold: ThresholdSpec::Constant(0.0),
        sign_regime: SignRegime::S1,
        seed: 13,
    };
    let sample = apply_threshold(&scenario.generate(3000)?.raw, &scenario.threshold)?;
    let spec = ModelSpec::new(sample.p(), sample.d(), 8);
    let (spec, basis, _) = prepare(&spec, &sample)?;
    let grid: Vec<(f64, f64)> = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e4].iter().map(|&v| (v, v)).collect();
    let (best, scores) = select_smoothing(&spec, &basis, &sample, &grid, &FitConfig::default())?;
    for ((l, _), s) in grid.iter().zip(&scores) {
        println!("lambda = nu = {l:8.0e}: held-out log-likelihood {s:.3}");
    }
    println!("selected lambda = {:e}, nu = {:e}", best.0, best.1);
    Ok(())
}
