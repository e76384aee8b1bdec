//! Built-in test maps.

use rug::Float;

use crate::affine::{self, AffineIem};
use crate::combinatorics::{Permutation, Sequence};
use crate::giem::{balancing_amplitude, BranchMap, Giem, GiemError, Result, Warp};

pub const NAMES: [&str; 6] = [
    "golden-rotation",
    "d3-affine",
    "d3-moebius",
    "d3-flat-a",
    "d3-flat-b",
    "d3-bump",
];

/// Types of the period-6 loop from `ABC/CAB`.
pub const D3_LOOP: [u8; 6] = [1, 0, 1, 0, 1, 0];

/// Scale of the central slope vector `(1, -1, 1)` of the d = 3 seed.
pub const D3_SLOPE: f64 = 0.2;

pub const MOEBIUS_WARP: f64 = 1.25;
pub const FLAT_A: f64 = 0.15;
pub const FLAT_B: f64 = -0.1;
pub const BUMPS: [f64; 2] = [0.05, -0.08];

pub fn d3_pi() -> Permutation {
    Permutation::from_rows("ABC", "CAB").unwrap()
}

/// The periodic d = 3 path of length `len`.
pub fn d3_sequence(len: usize) -> Sequence {
    Sequence::from_types(&d3_pi(), &D3_LOOP)
        .and_then(|s| s.extend_periodic(len))
        .expect("the loop closes")
}

pub fn d3_slopes() -> [f64; 3] {
    [D3_SLOPE, -D3_SLOPE, D3_SLOPE]
}

/// Lengths of the affine seed at working precision: the Perron vector of the slope-weighted
/// length update around the loop.
///
/// Rounding the lengths to f64 moves the map off the periodic path after about 60 steps.
pub fn d3_seed_lengths(prec: u32) -> Vec<Float> {
    let lp = d3_sequence(D3_LOOP.len());
    let mut slopes: Vec<Vec<Float>> = vec![d3_slopes().iter().map(|&x| Float::with_val(prec, x)).collect()];
    for step in &lp.steps {
        let mut w = slopes.last().unwrap().clone();
        let win = w[step.winner].clone();
        w[step.loser] += win;
        slopes.push(w);
    }
    let d = lp.d();
    let mut z: Vec<Float> = vec![Float::with_val(prec, 1u32) / d as u32; d];
    let tol = Float::with_val(prec, Float::i_exp(1, 8 - prec as i32));
    for _ in 0..4 * prec {
        let mut v = z.clone();
        for (j, step) in lp.steps.iter().enumerate().rev() {
            let e = step.eps as u32;
            let s = &slopes[j][step.pi.last(1)];
            let a_eps = step.pi.last(step.eps);
            let a_other = step.pi.last(1 - step.eps);
            let x = v[a_other].clone();
            v[a_eps] += Float::with_val(prec, s * (1 - e)).exp() * &x;
            v[a_other] = Float::with_val(prec, s * e).exp() * x;
        }
        let sum = v.iter().fold(Float::new(prec), |acc, x| acc + x);
        v.iter_mut().for_each(|x| *x /= &sum);
        let gap = v.iter().zip(&z).fold(Float::new(prec), |m, (a, b)| m.max(&Float::with_val(prec, a - b).abs()));
        z = v;
        if gap < tol {
            break;
        }
    }
    z
}

/// The affine seed rounded to f64.
pub fn d3_affine_seed() -> AffineIem {
    let lengths: Vec<f64> = d3_seed_lengths(256).iter().map(|x| x.to_f64()).collect();
    affine::build_affine(d3_pi(), &lengths, &d3_slopes(), true).expect("seed is a valid affine map")
}

pub fn golden_rotation(prec: u32) -> Result<Giem> {
    let pi = Permutation::from_rows("AB", "BA").unwrap();
    let phi = (Float::with_val(prec, 5u32).sqrt() + 1u32) / 2u32;
    let a = Float::with_val(prec, 2u32) - &phi;
    let b = phi - 1u32;
    Giem::new(pi, vec![a.clone(), b.clone()], vec![a, b], vec![BranchMap::Affine; 2], prec)
}

fn seed_giem(prec: u32) -> Result<Giem> {
    let dom = d3_seed_lengths(prec);
    let img = crate::giem::scaled_images(&dom, &d3_slopes(), prec);
    Giem::new(d3_pi(), dom, img, vec![BranchMap::Affine; 3], prec)
}

/// Sine bumps on the seed partition, balanced to zero mean nonlinearity.
fn bump(prec: u32) -> Result<Giem> {
    let last = balancing_amplitude(&BUMPS);
    let amps = [BUMPS[0], BUMPS[1], last];
    let dom = d3_seed_lengths(prec);
    let img = crate::giem::scaled_images(&dom, &d3_slopes(), prec);
    let branches = amps.iter().map(|&amp| BranchMap::SineBump { amp }).collect();
    Giem::new(d3_pi(), dom, img, branches, prec)
}

pub fn builtin(name: &str, prec: u32) -> Result<Giem> {
    match name {
        "golden-rotation" => golden_rotation(prec),
        "d3-affine" => seed_giem(prec),
        "d3-moebius" => Giem::conjugate(&seed_giem(prec)?, Warp::Moebius { a: MOEBIUS_WARP }),
        "d3-flat-a" => Giem::conjugate(&seed_giem(prec)?, Warp::flat(FLAT_A)),
        "d3-flat-b" => Giem::conjugate(&seed_giem(prec)?, Warp::flat(FLAT_B)),
        "d3-bump" => bump(prec),
        _ => Err(GiemError::Invalid(format!("unknown built-in map {name:?}; known: {}", NAMES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_build() {
        for n in NAMES {
            let f = builtin(n, 128).unwrap();
            assert!(crate::giem::mean_nonlinearity(&f).abs() < 1e-14, "{n}");
        }
        assert!(builtin("nope", 64).is_err());
    }

    #[test]
    fn seed_lengths_match_the_model() {
        let (g, _) = affine::affine_model(&d3_sequence(240), &d3_slopes(), 30).unwrap();
        let exact = d3_seed_lengths(256);
        for (a, b) in g.lengths.iter().zip(&exact) {
            assert!((a - b.to_f64()).abs() < 1e-12);
        }
        let norm = exact.iter().zip(d3_slopes()).fold(Float::new(256), |acc, (l, w)| acc + Float::with_val(256, w).exp() * l);
        assert!((norm - 1u32).abs() < 1e-60);
    }

    #[test]
    fn seed_follows_the_loop() {
        let f = std::sync::Arc::new(builtin("d3-affine", 256).unwrap());
        let st = crate::giem::renormalize(&f, 120).unwrap();
        assert_eq!(st[120].seq.steps, d3_sequence(120).steps);
    }
}
