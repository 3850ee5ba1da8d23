//! Monte Carlo Fisher information against the closed forms, in both
//! parametrizations.
//!
//! cargo run --release --example fisher_oracle -- [draws]

use tailgam::gpd::{fisher_info, fisher_info_ortho};
use tailgam::simlab::oracle_fisher;

fn main() -> tailgam::Result<()> {
    let draws: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    for ortho in [false, true] {
        println!("{}", if ortho { "(gamma, log varsigma)" } else { "(gamma, log sigma)" });
        for g in [-0.2, 0.0, 0.5, 1.0] {
            let closed = if ortho { fisher_info_ortho(g)? } else { fisher_info(g)? };
            let o = oracle_fisher(g, draws, 1, ortho)?;
            println!(
                "  gamma {g:5.2}: closed [[{:.5}, {:.5}], [., {:.5}]]  mc [[{:.5}, {:.5}], [., {:.5}]]  max rel err {:.1e}",
                closed[0][0], closed[0][1], closed[1][1], o.mean[0][0], o.mean[0][1], o.mean[1][1],
                o.max_rel_error()
            );
        }
    }
    Ok(())
}
