//! Peaks over threshold: constant, marginal-quantile and per-row column
//! thresholds on the same table.
//!
//! cargo run --release --example pot_threshold

use tailgam::pot::{apply_threshold, RawTable, ThresholdSpec};

fn main() -> tailgam::Result<()> {
    let csv = "\
y,x_1,z_1,tau
0.4,0.1,0.10,0.2
2.5,-0.3,0.20,1.0
1.1,0.7,0.35,1.5
3.9,0.2,0.50,1.0
0.8,-0.9,0.65,0.5
5.2,0.4,0.80,3.0
1.7,0.0,0.95,1.0
";
    let raw = RawTable::read_csv(csv.as_bytes(), true)?;
    for spec in [
        ThresholdSpec::Constant(1.0),
        "quantile:0.5".parse()?,
        ThresholdSpec::Column("tau".into()),
    ] {
        let s = apply_threshold(&raw, &spec)?;
        println!("{spec:?}: n = {}, N = {}, n/N = {:.3}", s.n(), s.big_n, s.exceedance_fraction());
        println!("  exceedances {:?}", s.y);
        for w in s.warnings() {
            println!("  warning: {w}");
        }
    }
    match apply_threshold(&raw, &ThresholdSpec::Constant(10.0)) {
        Err(e) => println!("threshold above the maximum: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
