use std::sync::{Arc, OnceLock};

use giet::fixtures::{self, FLAT_A, FLAT_B};
use giet::giem::Giem;
use giet::rigidity::{
    self, build_conjugacy, c8_estimate, dh_check, psi_series, rate_fit, sample_points, Outcome, Pair, RigidityError,
    TheoremOptions,
};
use proptest::prelude::*;

const PREC: u32 = 256;

fn builtin(name: &str) -> Arc<Giem> {
    Arc::new(fixtures::builtin(name, PREC).unwrap())
}

/// `W(x) = x + b (x - 5x^4 + 4x^5)` and its derivative.
fn w(b: f64, x: f64) -> f64 {
    x + b * (x - 5.0 * x.powi(4) + 4.0 * x.powi(5))
}

fn dw(b: f64, x: f64) -> f64 {
    1.0 + b * (1.0 - 20.0 * x.powi(3) + 20.0 * x.powi(4))
}

fn w_inv(b: f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if w(b, m) < y {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Both flat maps conjugate the same affine seed, so `h = W_b^{-1} ∘ W_a` conjugates them.
fn h_exact(x: f64) -> f64 {
    w_inv(FLAT_B, w(FLAT_A, x))
}

fn dh_exact(x: f64) -> f64 {
    dw(FLAT_A, x) / dw(FLAT_B, h_exact(x))
}

fn flat_pair() -> &'static Pair {
    static P: OnceLock<Pair> = OnceLock::new();
    P.get_or_init(|| Pair::until_length(&builtin("d3-flat-a"), &builtin("d3-flat-b"), 35, 1e-10, 435).unwrap())
}

#[test]
fn table_matches_the_closed_form_conjugacy() {
    let table = build_conjugacy(flat_pair(), 25).unwrap();
    for lvl in &table.levels {
        assert!(lvl.points.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 < p[1].1), "level {}", lvl.level);
        for (x, y) in &lvl.points {
            let gap = (y.to_f64() - h_exact(x.to_f64())).abs();
            assert!(gap < 1e-13, "level {} x {}: {gap:e}", lvl.level, x.to_f64());
        }
    }
    assert!(table.refinement_defect() < 1e-60, "{:e}", table.refinement_defect());
    assert!(table.deepest().max_gap < 1e-2);
}

#[test]
fn c8_is_the_derivative_at_zero() {
    let p = flat_pair();
    let c = c8_estimate(p, p.depth(), 1e-6).unwrap();
    assert!((c.c8 - dh_exact(0.0)).abs() < 1e-9, "{} vs {}", c.c8, dh_exact(0.0));
    assert!((dh_exact(0.0) - (1.0 + FLAT_A) / (1.0 + FLAT_B)).abs() < 1e-15);
    assert!(c.spread < 1e-6);
}

#[test]
fn derivative_law_matches_the_closed_form() {
    let p = flat_pair();
    let table = build_conjugacy(p, 25).unwrap();
    let c = c8_estimate(p, p.depth(), 1e-6).unwrap();
    let samples = sample_points(&table, 30, 3, p.prec());
    let r = dh_check(p, &table, &samples, c.c8, 25).unwrap();
    let exact_max = (0..=1000).map(|i| dh_exact(i as f64 / 1000.0)).fold(0.0, f64::max);
    assert!(r.lipschitz < exact_max * 1.01, "{} vs {exact_max}", r.lipschitz);
    assert!(r.min_slope > 0.0);
    for s in &r.samples {
        let exact = dh_exact(s.x);
        assert!((s.predicted - exact).abs() / exact < 1e-6, "x {}: {} vs {exact}", s.x, s.predicted);
        assert!((s.fd_slope - exact).abs() / exact < 1e-2);
    }
    for x in &samples {
        let ps = psi_series(p, x, 25).unwrap();
        let h = h_exact(x.to_f64());
        assert!(ps.h.0 - 1e-14 <= h && h <= ps.h.1 + 1e-14);
        assert!(ps.uncertainty < rigidity::PSI_TOL);
    }
}

#[test]
fn identical_maps_are_trivially_conjugate() {
    let f = builtin("d3-moebius");
    let p = Pair::until_length(&f, &f, 30, 1e-10, 430).unwrap();
    let table = build_conjugacy(&p, 20).unwrap();
    let c = c8_estimate(&p, p.depth(), 1e-12).unwrap();
    assert_eq!(c.c8, 1.0);
    let samples = sample_points(&table, 10, 1, p.prec());
    let r = dh_check(&p, &table, &samples, c.c8, 20).unwrap();
    assert!(r.max_rel_dev < 1e-60);
    let d = rigidity::distance_series(&p, 20, 5).unwrap();
    assert!(d.series.iter().all(|(_, v)| *v == 0.0));
}

#[test]
fn diverging_combinatorics_name_the_step() {
    match Pair::new(&builtin("d3-affine"), &builtin("golden-rotation"), 5) {
        Err(RigidityError::Combinatorics { step: 0, .. }) => {}
        other => panic!("{:?}", other.err()),
    }
}

#[test]
fn affine_map_is_its_own_model() {
    let r = rigidity::theorem_checks(&builtin("d3-affine"), None, &TheoremOptions::default());
    let Outcome::Ok(t1) = r.t1 else { panic!("{:?}", r.t1) };
    assert_eq!(t1.agree_through, 35);
    // the model is stored in f64; its rounding error grows at most along the unstable direction
    let s = &t1.distance.series;
    assert!(s[0].1 < 1e-15);
    assert!(s.iter().all(|(n, v)| *v < 4e-16 * 2f64.powi(*n as i32)), "{s:?}");
    assert!(r.t2.is_none() && r.t3.is_none());
}

#[test]
fn hypotheses_are_reported_not_raised() {
    let other = Arc::new(Giem::affine(fixtures::d3_pi(), &[0.5, 0.3, 0.2], &[0.0; 3], PREC).unwrap());
    let r = rigidity::theorem_checks(&builtin("d3-affine"), Some(&other), &TheoremOptions::default());
    assert!(matches!(r.hypotheses.same_combinatorics, Some(Outcome::Failed(_))));
    assert!(matches!(r.t3, Some(Outcome::Failed(_))));
}

#[test]
fn distortion_decays_along_the_towers() {
    let states = giet::giem::renormalize(&builtin("d3-moebius"), 30).unwrap();
    let s = rigidity::distortion_series(&states, 16).unwrap();
    assert!(s[30].1 < s[5].1 * 1e-3, "{:?}", s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_fit_recovers_synthetic_rates(lambda in 0.05f64..0.95, c in 0.1f64..10.0, from in 1usize..10) {
        let series: Vec<(usize, f64)> = (from..from + 30).map(|n| (n, c * lambda.powf((n as f64).sqrt()))).collect();
        let r = rate_fit(&series).unwrap();
        prop_assert!((r.sqrt.rate - lambda).abs() < 1e-9);
        prop_assert!((r.sqrt.prefactor - c).abs() / c < 1e-9);
        prop_assert!(r.sqrt.rms < 1e-9);
        prop_assert!(r.exponential.rms > 0.0);
        prop_assert!(!r.sqrt.non_decaying);
    }
}
