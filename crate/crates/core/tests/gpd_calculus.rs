use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01};

use tailgam::gpd::{
    gpd_cdf, gpd_logpdf, gpd_sample, ortho_logpdf, score_gamma, score_gamma_ortho, score_logsigma,
    score_logvarsigma, GpdOrthoPoint, GpdPoint,
};
use tailgam::simlab::oracle_fisher;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

/// Random valid `(γ, σ, y)` with `y` inside the support.
fn random_point(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let g: f64 = rng.gen_range(-0.45..1.2);
    let s: f64 = rng.gen_range(0.3..3.0);
    let u: f64 = rng.gen_range(0.02..0.98);
    (g, s, gpd_sample(&GpdPoint::new(g, s).unwrap(), u))
}

#[test]
fn plain_scores_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let nll = |g: f64, ls: f64, y: f64| -gpd_logpdf(&GpdPoint::new(g, ls.exp()).unwrap(), y).unwrap();
    for _ in 0..100 {
        let (g, s, y) = random_point(&mut rng);
        let p = GpdPoint::new(g, s).unwrap();
        let ls = s.ln();
        let h = 1e-5;
        let fd_g = (nll(g + h, ls, y) - nll(g - h, ls, y)) / (2.0 * h);
        let fd_s = (nll(g, ls + h, y) - nll(g, ls - h, y)) / (2.0 * h);
        let sg = score_gamma(&p, y).unwrap();
        let ss = score_logsigma(&p, y).unwrap();
        assert!(rel(fd_g, sg) <= 1e-6, "γ={g} σ={s} y={y}: {fd_g} vs {sg}");
        assert!(rel(fd_s, ss) <= 1e-6, "γ={g} σ={s} y={y}: {fd_s} vs {ss}");
    }
}

#[test]
fn ortho_scores_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let nll = |g: f64, lv: f64, y: f64| {
        -ortho_logpdf(&GpdOrthoPoint::new(g, lv.exp()).unwrap(), y).unwrap()
    };
    for _ in 0..20 {
        let (g, s, y) = random_point(&mut rng);
        let p = GpdOrthoPoint::new(g, s * (1.0 + g)).unwrap();
        let lv = p.varsigma.ln();
        let h = 1e-5;
        let fd_g = (nll(g + h, lv, y) - nll(g - h, lv, y)) / (2.0 * h);
        let fd_v = (nll(g, lv + h, y) - nll(g, lv - h, y)) / (2.0 * h);
        assert!(rel(fd_g, score_gamma_ortho(&p, y).unwrap()) <= 1e-6);
        assert!(rel(fd_v, score_logvarsigma(&p, y).unwrap()) <= 1e-6);
    }
}

#[test]
fn scores_have_zero_mean_under_the_model() {
    for g in [-0.2, 0.0, 0.3, 1.0] {
        let p = GpdPoint::new(g, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 1_000_000;
        let (mut s1, mut s2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let y = gpd_sample(&p, Open01.sample(&mut rng));
            let a = score_gamma(&p, y).unwrap();
            let b = score_logsigma(&p, y).unwrap();
            s1 += a;
            s2 += b;
            q1 += a * a;
            q2 += b * b;
        }
        let nf = n as f64;
        for (s, q) in [(s1, q1), (s2, q2)] {
            let mean = s / nf;
            let se = ((q / nf - mean * mean) / nf).sqrt();
            assert!(mean.abs() <= 3.0 * se, "γ={g}: mean {mean}, se {se}");
        }
    }
}

#[test]
fn sampler_passes_kolmogorov_distance() {
    for g in [-0.3, 0.0, 0.5] {
        let p = GpdPoint::new(g, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 100_000;
        let mut ys: Vec<f64> = (0..n).map(|_| gpd_sample(&p, Open01.sample(&mut rng))).collect();
        ys.sort_by(f64::total_cmp);
        let d = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let f = gpd_cdf(&p, y);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d <= 0.01, "γ={g}: D = {d}");
    }
}

#[test]
fn fisher_at_point_two_and_ortho_at_half() {
    let o = oracle_fisher(0.2, 1_000_000, 1, false).unwrap();
    assert!(o.max_rel_error() <= 0.01, "{o:?}");
    let o = oracle_fisher(0.5, 1_000_000, 2, true).unwrap();
    assert!((o.mean[0][0] - 4.0 / 9.0).abs() <= 0.01 * 4.0 / 9.0);
    assert!((o.mean[1][1] - 0.5).abs() <= 0.005);
    assert!(o.mean[0][1].abs() <= 0.01);
    for r in 0..2 {
        for c in 0..2 {
            assert!(o.stderr[r][c] >= 0.0);
        }
    }
}
