//! Fit the additive GPD model to simulated exceedances and compare the
//! fitted shape with the truth along each smooth covariate.
//!
//! cargo run --release --example fit_additive -- [N]

use tailgam::fitter::FitConfig;
use tailgam::pot::{apply_threshold, ThresholdSpec};
use tailgam::simlab::{AdditiveScale, AdditiveTruth, Family, Scenario, SignRegime, SmoothFn};
use tailgam::{FittedModel, ModelSpec};

fn main() -> tailgam::Result<()> {
    let big_n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let scenario = Scenario {
        family: Family::ExactGpd { tail_fraction: 1.0 },
        gamma: AdditiveTruth {
            beta: vec![0.45, 0.1],
            smooths: vec![SmoothFn::Sin { a: 0.15 }, SmoothFn::Linear { a: 0.2 }],
        },
        scale: AdditiveTruth {
            beta: vec![0.5, 0.0],
            smooths: vec![SmoothFn::Cos { a: 0.3 }, SmoothFn::Zero],
        },
        additive_scale: AdditiveScale::Sigma,
        threshold: ThresholdSpec::Constant(0.0),
        sign_regime: SignRegime::S1,
        seed: 3,
    };
    let raw = scenario.generate(big_n)?.raw;
    let sample = apply_threshold(&raw, &scenario.threshold)?;

    let mut spec = ModelSpec::new(sample.p(), sample.d(), ModelSpec::default_knots(sample.n(), 2));
    spec.lambda = 0.01;
    spec.nu = 0.01;
    let model = FittedModel::fit_sample(&spec, &sample, &FitConfig::default())?;
    let fit = &model.fit;
    println!(
        "n = {}, K = {}, converged = {} after {} Newton steps, penalized NLL {:.3}",
        sample.n(),
        model.spec.knots,
        fit.converged,
        fit.iterations,
        fit.nll
    );
    for w in &fit.warnings {
        println!("warning: {w}");
    }
    println!("linear shape part beta = {:?}", model.theta().beta());
    println!("linear log-scale part u = {:?}", model.theta().u());

    // vary one smooth covariate, hold the rest at 0.5 (x at 0)
    for j in 0..sample.d() {
        println!("\nz_{}   gamma_hat   gamma_true", j + 1);
        for i in 0..=10 {
            let mut z = vec![0.5; sample.d()];
            z[j] = i as f64 / 10.0;
            let (g, _) = model.predict_point(&[0.0], &z)?;
            let truth = scenario.gamma_at(&[1.0, 0.0], &z);
            println!("{:4.1}   {g:9.4}   {truth:10.4}", z[j]);
        }
    }
    Ok(())
}
