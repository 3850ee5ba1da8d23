//! Log-log RMSE slope of the shape estimate on exact-GPD additive data.
//!
//! cargo run --release --example rate_experiment -- [reps] [parametric]

use tailgam::pot::ThresholdSpec;
use tailgam::simlab::{
    run_rate_experiment, AdditiveScale, AdditiveTruth, Family, RateConfig, RateTarget, Scenario,
    SignRegime, SmoothFn, Smoothing,
};

fn main() -> tailgam::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let reps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let parametric = args.get(2).is_some_and(|s| s == "parametric");
    let smooth = |g: SmoothFn| if parametric { SmoothFn::Zero } else { g };
    let scenario = Scenario {
        family: Family::ExactGpd { tail_fraction: 1.0 },
        gamma: AdditiveTruth {
            beta: vec![0.4, 0.1],
            smooths: vec![smooth(SmoothFn::Sin { a: 0.15 }), smooth(SmoothFn::Linear { a: 0.2 })],
        },
        scale: AdditiveTruth {
            beta: vec![0.0, -0.2],
            smooths: vec![smooth(SmoothFn::Cos { a: 0.3 }), SmoothFn::Zero],
        },
        additive_scale: AdditiveScale::Sigma,
        threshold: ThresholdSpec::Constant(0.0),
        sign_regime: SignRegime::S1,
        seed: 1,
    };
    let cfg = RateConfig {
        scenario,
        n_grid: vec![500, 1000, 2000, 4000, 8000],
        reps,
        m: 2,
        smoothing: if parametric {
            Smoothing::Fixed { lambda: 1e4, nu: 1e4 }
        } else {
            Smoothing::default()
        },
        reparam: false,
        target: if parametric { RateTarget::Parametric } else { RateTarget::Smooth },
        band: None,
        output: Default::default(),
    };
    let t = std::time::Instant::now();
    let report = run_rate_experiment(&cfg)?;
    println!("{:>6} {:>3} {:>10} {:>10} {:>10} {:>4}", "n", "K", "rmse_g", "rmse_s", "beta_err", "drop");
    for r in &report.rows {
        println!(
            "{:>6} {:>3} {:>10.5} {:>10.5} {:>10.5} {:>4}",
            r.n,
            r.knots,
            r.rmse_gamma,
            r.rmse_scale.unwrap_or(f64::NAN),
            r.beta_error,
            r.dropped
        );
    }
    println!(
        "slope {:.3} ± {:.3} (expected {:.3}, band [{}, {}]) pass = {}  [{:.1?}]",
        report.slope,
        report.slope_se,
        report.expected_slope,
        report.band[0],
        report.band[1],
        report.pass,
        t.elapsed()
    );
    Ok(())
}
