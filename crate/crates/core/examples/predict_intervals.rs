//! Save a fitted model, load it back and report pointwise confidence
//! intervals for the shape and scale.
//!
//! cargo run --release --example predict_intervals

use tailgam::fitter::FitConfig;
use tailgam::pot::{apply_threshold, RawTable, ThresholdSpec};
use tailgam::simlab::{AdditiveScale, AdditiveTruth, Family, Scenario, SignRegime, SmoothFn};
use tailgam::{FittedModel, ModelSpec};

fn main() -> tailgam::Result<()> {
    let scenario = Scenario {
        family: Family::ExactGpd { tail_fraction: 1.0 },
        gamma: AdditiveTruth {
            beta: vec![0.25],
            smooths: vec![SmoothFn::Sin { a: 0.15 }],
        },
        scale: AdditiveTruth {
            beta: vec![0.0],
            smooths: vec![SmoothFn::Zero],
        },
        additive_scale: AdditiveScale::Sigma,
        threshold: ThresholdSpec::Constant(0.0),
        sign_regime: SignRegime::S1,
        seed: 11,
    };
    let sample = apply_threshold(&scenario.generate(3000)?.raw, &scenario.threshold)?;
    let mut spec = ModelSpec::new(sample.p(), sample.d(), 5);
    spec.lambda = 0.1;
    spec.nu = 0.1;
    let model = FittedModel::fit_sample(&spec, &sample, &FitConfig::default())?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.json");
    model.save(&path)?;
    let loaded = FittedModel::load(&path)?;
    println!("model written and re-read ({} bytes)", std::fs::metadata(&path)?.len());

    println!("{:>5} {:>8} {:>8} {:>18} {:>8} {:>18}", "z", "truth", "gamma", "95% interval", "scale", "95% interval");
    for i in 0..=8 {
        let z = i as f64 / 8.0;
        let ci = loaded.interval(&[], &[z], 0.95)?;
        println!(
            "{z:5.3} {:8.4} {:8.4} [{:7.4}, {:7.4}] {:8.4} [{:7.4}, {:7.4}]",
            scenario.gamma_at(&[1.0], &[z]),
            ci.gamma_hat,
            ci.gamma_lo,
            ci.gamma_hi,
            ci.scale_hat,
            ci.scale_lo,
            ci.scale_hi
        );
    }

    // table interface, as used by the `predict` subcommand
    let table = RawTable::read_csv("z_1\n0.25\n0.75\n".as_bytes(), false)?;
    let preds = loaded.predict_table(&table, 0.9)?;
    let mut out = Vec::new();
    tailgam::model::write_predictions(&preds, 0, 1, &mut out)?;
    print!("\n{}", String::from_utf8_lossy(&out));
    Ok(())
}
