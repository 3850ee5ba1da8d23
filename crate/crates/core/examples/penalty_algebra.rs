//! The roughness penalty of a normalized B-spline: the band matrix Psi, the
//! derivative operator, the low-degree Gram matrix, and the resulting
//! quadratic form checked against a direct Riemann sum.
//!
//! cargo run --release --example penalty_algebra -- [K] [m]

use nalgebra::DVector;
use tailgam::splines::{KnotGrid, NormalizedBasis, PenaltyMatrices};

fn main() -> tailgam::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let k = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let m = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let grid = KnotGrid::new(k, 3)?;
    let zs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    let basis = NormalizedBasis::build(&grid, &zs)?;
    let pm = PenaltyMatrices::new(&basis, m)?;
    println!("knots {:?}", grid.knots());
    println!("Psi {}x{}, D_m {}x{}, R_m {}x{}", pm.psi.nrows(), pm.psi.ncols(), pm.dm.nrows(), pm.dm.ncols(), pm.rm.nrows(), pm.rm.ncols());
    println!("D_{m} = {:.0}", pm.dm);
    println!("R_{m} = {:.5}", pm.rm);

    let p = pm.quadratic_form();
    let v = DVector::from_fn(basis.len(), |i, _| ((i * 7 + 3) % 5) as f64 - 2.0);
    let form = v.dot(&(&p * &v));
    // midpoint sum of the squared m-th derivative
    let cells = 200_000;
    let riemann: f64 = (0..cells)
        .map(|i| {
            let z = (i as f64 + 0.5) / cells as f64;
            basis.eval_mth_derivative(v.as_slice(), m, z).unwrap().powi(2)
        })
        .sum::<f64>()
        / cells as f64;
    println!("v' P v = {form:.10}, midpoint integral = {riemann:.10}");
    let eig = p.symmetric_eigenvalues();
    println!("eigenvalues of P: min {:.3e}, max {:.3e}", eig.min(), eig.max());
    Ok(())
}
