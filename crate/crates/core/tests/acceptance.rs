//! The acceptance suite. Prints one line per criterion and exits non-zero when the set of
//! failing criteria differs from `KNOWN_FAILURES`.
//!
//! Run with `cargo test -p giet --test acceptance`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use giet::affine::{self, ExtractOptions};
use giet::cocycle;
use giet::combinatorics::{self, minimal_k, Permutation, Sequence};
use giet::fit::{fit, RateModel};
use giet::fixtures::{self, D3_LOOP};
use giet::giem::{self, Giem, RenormState};
use giet::rigidity::{self, Pair, TheoremOptions};
use rug::Float;

/// Criteria that fail at desk scale; each has an entry in the decisions ledger.
const KNOWN_FAILURES: [usize; 1] = [5];

const PREC: u32 = 256;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn builtin(name: &str) -> Arc<Giem> {
    Arc::new(fixtures::builtin(name, PREC).expect("built-in map"))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_cocycle_identities() -> Verdict {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (top, bottom) in [("AB", "BA"), ("ABC", "CBA")] {
        let pi = Permutation::from_rows(top, bottom).unwrap();
        for q in combinatorics::rauzy_class(&pi) {
            for eps in [0u8, 1] {
                let step = combinatorics::rauzy_move(&q, eps).unwrap();
                checked += 1;
                if let Err(e) = cocycle::check_intertwine(&step) {
                    bad.push(format!("{q:?} eps {eps}: {e}"));
                }
            }
        }
    }
    verdict(bad.is_empty() && checked > 0, format!("{checked} steps, {} failures {bad:?}", bad.len()))
}

/// Loops of length at most 12 from `pi` on which every letter wins.
fn loops_from(pi: &Permutation, max_len: usize) -> Vec<Sequence> {
    let mut out = Vec::new();
    let mut stack = vec![Sequence::new(pi.clone())];
    while let Some(s) = stack.pop() {
        if !s.is_empty() && s.end() == pi {
            let mut won = vec![false; pi.d()];
            s.steps.iter().for_each(|st| won[st.winner] = true);
            if won.iter().all(|w| *w) {
                out.push(s.clone());
            }
            continue;
        }
        if s.len() < max_len {
            for eps in [0u8, 1] {
                let mut t = s.clone();
                t.push(eps).unwrap();
                stack.push(t);
            }
        }
    }
    out
}

fn c2_central_fixed_vectors() -> Verdict {
    let mut loops = vec![Sequence::from_types(&fixtures::d3_pi(), &D3_LOOP).unwrap()];
    loops.extend(loops_from(&Permutation::from_rows("ABC", "CBA").unwrap(), 8));
    let mut vectors = 0;
    let mut bad = Vec::new();
    let mut used = 0;
    for lp in &loops {
        if minimal_k(&lp.extend_periodic(4 * lp.len()).unwrap(), 12).is_none() {
            continue;
        }
        let Ok(cs) = cocycle::psi_p(lp) else { continue };
        used += 1;
        let m = cocycle::cocycle_product(lp, 0, lp.len());
        for v in cs.basis() {
            vectors += 1;
            if m.apply_q(&v) != v {
                bad.push(lp.types());
            }
        }
    }
    verdict(
        bad.is_empty() && vectors > 0,
        format!("{used} loops, {vectors} basis vectors, not fixed: {bad:?}"),
    )
}

fn c3_hyperbolicity() -> Verdict {
    let seq = combinatorics::generate_k_bounded(&fixtures::d3_pi(), 60, 4, 11).unwrap();
    let h = cocycle::hyperbolicity_probe(&seq, 32, 11, 5).unwrap();
    let golden = giem::renormalize(&Arc::new(fixtures::golden_rotation(PREC).unwrap()), 40).unwrap();
    let g = cocycle::hyperbolicity_probe(&golden[40].seq, 16, 11, 10).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let rel = (g.unstable.rate - phi).abs() / phi;
    verdict(
        h.unstable.rate > 1.05 && h.stable.rate > 1.05 && rel < 0.02,
        format!(
            "d=3 mu_u {:.4} mu_s {:.4}; golden mu {:.6} (phi off by {:.2e})",
            h.unstable.rate, h.stable.rate, g.unstable.rate, rel
        ),
    )
}

fn c4_tower_conservation() -> Verdict {
    let mut worst = 0.0f64;
    for name in fixtures::NAMES {
        let states = giem::renormalize(&builtin(name), 40).unwrap();
        for s in &states {
            let total = giem::tower_total(s).unwrap();
            worst = worst.max((total - 1u32).abs().to_f64());
        }
    }
    verdict(worst < 1e-20, format!("max |sum q|I| - 1| = {worst:.3e} over {} maps", fixtures::NAMES.len()))
}

/// `(n, |L^{n+1} - Θ_n L^n|)` for `n` in `from..=to`.
fn pseudo_orbit_defects(states: &[RenormState], from: usize, to: usize) -> Vec<(usize, f64)> {
    (from..=to)
        .map(|n| {
            let l = giem::mean_log_derivative(&states[n], 32).unwrap();
            let next = giem::mean_log_derivative(&states[n + 1], 32).unwrap();
            let step = &states[n + 1].seq.steps[n];
            (n, sup_diff(&next, &affine::slope_update(&l, step)))
        })
        .collect()
}

fn c5_pseudo_orbit() -> Verdict {
    let f = builtin("d3-bump");
    let nl = giem::mean_nonlinearity(&f);
    let states = giem::renormalize(&f, 36).unwrap();
    let defects = pseudo_orbit_defects(&states, 5, 35);
    let s = fit(&defects, RateModel::SqrtExponential).unwrap();
    let e = fit(&defects, RateModel::Exponential).unwrap();
    verdict(
        s.rate <= 0.9 && s.rms < 0.5,
        format!(
            "nonlinearity {nl:.1e}; sqrt fit lambda {:.4} rms {:.3} (exp fit lambda {:.4} rms {:.3})",
            s.rate, s.rms, e.rate, e.rms
        ),
    )
}

fn moebius_options() -> TheoremOptions {
    TheoremOptions {
        extract: ExtractOptions {
            depth: 60,
            ..ExtractOptions::default()
        },
        ..TheoremOptions::default()
    }
}

fn c6_theorem_one() -> Verdict {
    let run = rigidity::theorem_one(&builtin("d3-moebius"), &moebius_options()).unwrap();
    let t1 = &run.t1;
    let Some(fit) = t1.distance.fit.ok() else {
        return verdict(false, format!("fit failed: {:?}", t1.distance.fit));
    };
    verdict(
        t1.agree_through >= 35 && fit.sqrt.rate <= 0.9 && t1.normalization_residual < 1e-8,
        format!(
            "agree through {}; sqrt fit lambda {:.4} rms {:.3}; normalization residual {:.2e}",
            t1.agree_through, fit.sqrt.rate, fit.sqrt.rms, t1.normalization_residual
        ),
    )
}

fn c7_break_equivalent_pair() -> Verdict {
    let r = rigidity::theorem_checks(&builtin("d3-flat-a"), Some(&builtin("d3-flat-b")), &TheoremOptions::default());
    let Some(Some(t2)) = r.t2.as_ref().map(|o| o.ok()) else {
        return verdict(false, format!("model comparison failed: {:?}", r.t2));
    };
    let Some(Some(t3)) = r.t3.as_ref().map(|o| o.ok()) else {
        return verdict(false, format!("distance series failed: {:?}", r.t3));
    };
    let Some(fit) = t3.fit.ok() else {
        return verdict(false, format!("fit failed: {:?}", t3.fit));
    };
    let gap = t2.weak_lengths_gap.max(t2.weak_slopes_gap);
    verdict(
        gap < 1e-8 && fit.sqrt.rate <= 0.9,
        format!(
            "model gap lengths {:.2e} slopes {:.2e}; sqrt fit lambda {:.5} rms {:.3}",
            t2.weak_lengths_gap, t2.weak_slopes_gap, fit.sqrt.rate, fit.sqrt.rms
        ),
    )
}

fn c8_break_telescoping() -> Verdict {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for name in ["d3-moebius", "d3-flat-a", "d3-bump"] {
        let states = giem::renormalize(&builtin(name), 20).unwrap();
        for s in &states {
            for gamma in 0..s.d() {
                if let Ok(c) = giem::break_invariance_check(s, gamma) {
                    checked += 1;
                    worst = worst.max(c.diff.abs());
                }
            }
        }
    }
    verdict(
        checked > 0 && worst < 1e-15,
        format!("{checked} checkable boundaries, max difference {worst:.2e}"),
    )
}

fn c9_rigidity_law() -> Verdict {
    let (f, g) = (builtin("d3-flat-a"), builtin("d3-flat-b"));
    let pair = Pair::until_length(&f, &g, 35, 1e-10, 435).unwrap();
    let table = rigidity::build_conjugacy(&pair, 25).unwrap();
    let c8 = match rigidity::c8_estimate(&pair, pair.depth(), 1e-6) {
        Ok(c) => c,
        Err(e) => return verdict(false, format!("C8: {e}")),
    };
    let samples = rigidity::sample_points(&table, 50, 7, pair.prec());
    let dh = match rigidity::dh_check(&pair, &table, &samples, c8.c8, 25) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("Dh: {e}")),
    };
    let mut worst = vec![0.0f64; 25];
    for x in &samples {
        for (n, v) in rigidity::psi_series(&pair, x, 25).unwrap().increments {
            worst[n] = worst[n].max(v);
        }
    }
    let incs: Vec<(usize, f64)> = worst.into_iter().enumerate().filter(|(n, v)| *n >= 5 && *v > 0.0).collect();
    let fit = match rigidity::rate_fit(&incs) {
        Ok(f) => f,
        Err(e) => return verdict(false, format!("psi increments: {e}")),
    };
    verdict(
        dh.samples.len() == 50 && dh.max_rel_dev < 1e-2 && c8.spread < 1e-6 && fit.sqrt.rate <= 0.9,
        format!(
            "pair depth {}; {} samples, max rel dev {:.2e}; C8 {:.10} spread {:.1e}; psi increments sqrt lambda {:.4} rms {:.3}",
            pair.depth(),
            dh.samples.len(),
            dh.max_rel_dev,
            c8.c8,
            c8.spread,
            fit.sqrt.rate,
            fit.sqrt.rms
        ),
    )
}

fn c10_round_trips() -> Verdict {
    let seed_lengths: Vec<f64> = fixtures::d3_seed_lengths(PREC).iter().map(Float::to_f64).collect();
    let seed_slopes = fixtures::d3_slopes();
    let opts = TheoremOptions::default();
    let run = rigidity::theorem_one(&builtin("d3-affine"), &opts).unwrap();
    let m = &run.report.model;
    let weak = sup_diff(&m.lengths, &seed_lengths).max(sup_diff(&m.slopes, &seed_slopes));
    let strong = match affine::strong_model(&run.states, &m.slopes, opts.extract.lookahead) {
        Ok(s) => sup_diff(&s.model.lengths, &seed_lengths).max(sup_diff(&s.model.slopes, &seed_slopes)),
        Err(e) => return verdict(false, format!("strong model: {e}")),
    };
    verdict(
        weak < 1e-10 && strong < 1e-10,
        format!("extracted model off by {weak:.2e}; strong model off by {strong:.2e}"),
    )
}

fn main() {
    type Criterion = (usize, &'static str, Duration, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        (1, "exact cocycle identities", Duration::from_secs(1), c1_cocycle_identities),
        (2, "exact central fixed vectors", Duration::from_secs(1), c2_central_fixed_vectors),
        (3, "hyperbolicity", Duration::from_secs(10), c3_hyperbolicity),
        (4, "tower conservation", Duration::from_secs(30), c4_tower_conservation),
        (5, "pseudo-orbit decay", Duration::from_secs(120), c5_pseudo_orbit),
        (6, "affine model of one map", Duration::from_secs(300), c6_theorem_one),
        (7, "break-equivalent pair", Duration::from_secs(300), c7_break_equivalent_pair),
        (8, "break telescoping", Duration::from_secs(30), c8_break_telescoping),
        (9, "rigidity law", Duration::from_secs(300), c9_rigidity_law),
        (10, "round trips", Duration::from_secs(60), c10_round_trips),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        let t = Instant::now();
        let v = run();
        let took = t.elapsed();
        let pass = v.pass && took <= budget;
        if !pass {
            failed.push(id);
        }
        println!(
            "criterion {id:>2} {} {name}: {} [{:.2} s of {} s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("failing: {failed:?}; known failures: {KNOWN_FAILURES:?}");
    if failed != KNOWN_FAILURES {
        std::process::exit(1);
    }
}
