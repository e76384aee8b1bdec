//! Branch families on [0,1], global warps and fractional-linear maps.

use std::sync::Arc;

use rug::float::Constant;
use rug::{Assign, Float};
use serde::{Deserialize, Serialize};

/// A value with its first two derivatives.
#[derive(Clone, Debug)]
pub struct Jet {
    pub v: Float,
    pub d1: Float,
    pub d2: Float,
}

impl Jet {
    pub fn new(prec: u32) -> Self {
        Jet {
            v: Float::new(prec),
            d1: Float::new(prec),
            d2: Float::new(prec),
        }
    }

    /// `outer ∘ inner` where `outer` was evaluated at `inner.v`.
    pub fn compose(outer: &Jet, inner: &Jet) -> Jet {
        let prec = outer.v.prec();
        let d1 = Float::with_val(prec, &outer.d1 * &inner.d1);
        let sq = Float::with_val(prec, inner.d1.square_ref());
        let d2 = Float::with_val(prec, &outer.d2 * &sq) + Float::with_val(prec, &outer.d1 * &inner.d2);
        Jet { v: outer.v.clone(), d1, d2 }
    }
}

/// Fractional-linear map `x -> (p x + r) / (s x + t)`.
#[derive(Clone, Debug)]
pub struct Mob {
    pub p: Float,
    pub r: Float,
    pub s: Float,
    pub t: Float,
}

impl Mob {
    pub fn identity(prec: u32) -> Self {
        Mob {
            p: Float::with_val(prec, 1),
            r: Float::new(prec),
            s: Float::new(prec),
            t: Float::with_val(prec, 1),
        }
    }

    /// `self ∘ o`, rescaled so the largest entry has magnitude about one.
    pub fn after(&self, o: &Mob) -> Mob {
        let prec = self.p.prec();
        let m = |a: &Float, b: &Float, c: &Float, d: &Float| {
            Float::with_val(prec, a * b) + Float::with_val(prec, c * d)
        };
        let mut out = Mob {
            p: m(&self.p, &o.p, &self.r, &o.s),
            r: m(&self.p, &o.r, &self.r, &o.t),
            s: m(&self.s, &o.p, &self.t, &o.s),
            t: m(&self.s, &o.r, &self.t, &o.t),
        };
        let big = [&out.p, &out.r, &out.s, &out.t]
            .iter()
            .map(|x| Float::with_val(prec, x.abs_ref()))
            .max_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap();
        if big > 0 {
            for x in [&mut out.p, &mut out.r, &mut out.s, &mut out.t] {
                *x /= &big;
            }
        }
        out
    }

    pub fn eval(&self, x: &Float) -> Jet {
        let prec = x.prec();
        let den = Float::with_val(prec, &self.s * x) + &self.t;
        let num = Float::with_val(prec, &self.p * x) + &self.r;
        let det = Float::with_val(prec, &self.p * &self.t) - Float::with_val(prec, &self.r * &self.s);
        let v = Float::with_val(prec, &num / &den);
        let d1 = Float::with_val(prec, &det / Float::with_val(prec, den.square_ref()));
        let d2 = Float::with_val(prec, -2 * Float::with_val(prec, &self.s * &d1)) / &den;
        Jet { v, d1, d2 }
    }

    pub fn value(&self, x: &Float) -> Float {
        let prec = x.prec();
        let den = Float::with_val(prec, &self.s * x) + &self.t;
        let num = Float::with_val(prec, &self.p * x) + &self.r;
        num / den
    }

    pub fn inverse(&self) -> Mob {
        Mob {
            p: self.t.clone(),
            r: Float::with_val(self.r.prec(), -&self.r),
            s: Float::with_val(self.s.prec(), -&self.s),
            t: self.p.clone(),
        }
    }
}

/// A diffeomorphism of [0,1] fixing both endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warp {
    Identity,
    /// `a x / (1 + (a - 1) x)`
    Moebius { a: f64 },
    /// Polynomial with coefficients in increasing degree.
    Poly { coeffs: Vec<f64> },
}

impl Warp {
    /// `x + a x (1 - x)`.
    pub fn quadratic(a: f64) -> Warp {
        Warp::Poly { coeffs: vec![0.0, 1.0 + a, -a] }
    }

    /// `x + b (x - 5x^4 + 4x^5)`: equal slopes 1+b at both ends and a flat
    /// jet at 0 up to third order.
    pub fn flat(b: f64) -> Warp {
        Warp::Poly {
            coeffs: vec![0.0, 1.0 + b, 0.0, 0.0, -5.0 * b, 4.0 * b],
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Warp::Identity)
    }

    /// Checks the endpoints and positivity of the derivative on a grid.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Warp::Identity => Ok(()),
            Warp::Moebius { a } if *a > 0.0 && a.is_finite() => Ok(()),
            Warp::Moebius { a } => Err(format!("Moebius warp needs a > 0, got {a}")),
            Warp::Poly { coeffs } => {
                let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                let dp = |x: f64| {
                    coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .rev()
                        .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
                };
                if p(0.0).abs() > 1e-15 || (p(1.0) - 1.0).abs() > 1e-13 {
                    return Err("polynomial warp must fix 0 and 1".into());
                }
                if (0..=4096).any(|i| dp(i as f64 / 4096.0) <= 0.0) {
                    return Err("polynomial warp is not increasing".into());
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &Float) -> Jet {
        let prec = x.prec();
        match self {
            Warp::Identity => Jet {
                v: x.clone(),
                d1: Float::with_val(prec, 1),
                d2: Float::new(prec),
            },
            Warp::Moebius { a } => moebius_jet(*a, x),
            Warp::Poly { coeffs } => {
                let n = coeffs.len();
                let mut v = Float::with_val(prec, coeffs[n - 1]);
                let mut d1 = Float::new(prec);
                let mut d2 = Float::new(prec);
                for c in coeffs[..n - 1].iter().rev() {
                    // Horner for the value and both derivatives
                    d2 *= x;
                    d2 += Float::with_val(prec, &d1 * 2u32);
                    d1 *= x;
                    d1 += &v;
                    v *= x;
                    v += *c;
                }
                let s = poly_at_one(coeffs, prec);
                Jet {
                    v: v / &s,
                    d1: d1 / &s,
                    d2: d2 / &s,
                }
            }
        }
    }

    pub fn value(&self, x: &Float) -> Float {
        match self {
            Warp::Identity => x.clone(),
            Warp::Moebius { a } => moebius_jet(*a, x).v,
            Warp::Poly { coeffs } => {
                let prec = x.prec();
                let mut v = Float::with_val(prec, coeffs[coeffs.len() - 1]);
                for c in coeffs[..coeffs.len() - 1].iter().rev() {
                    v *= x;
                    v += *c;
                }
                v / poly_at_one(coeffs, prec)
            }
        }
    }

    /// Solves `h(x) = y` for x in [0,1].
    pub fn inverse(&self, y: &Float) -> Float {
        let prec = y.prec();
        match self {
            Warp::Identity => y.clone(),
            Warp::Moebius { a } => {
                let a = Float::with_val(prec, *a);
                let den = Float::with_val(prec, 1u32 - &a) * y + &a;
                Float::with_val(prec, y / den)
            }
            Warp::Poly { coeffs } => {
                // solve the unnormalized p(x) = y p(1)
                let target = Float::with_val(prec, y * poly_at_one(coeffs, prec));
                let t64 = target.to_f64();
                let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                let dp = |x: f64| {
                    coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .rev()
                        .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
                };
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let mut x = t64.clamp(0.0, 1.0);
                for _ in 0..100 {
                    let fx = p(x) - t64;
                    if fx > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let mut nx = x - fx / dp(x);
                    if !(nx > lo && nx < hi) {
                        nx = 0.5 * (lo + hi);
                    }
                    if (nx - x).abs() <= 1e-15 {
                        x = nx;
                        break;
                    }
                    x = nx;
                }
                // Newton with the derivative at the precision each step can use
                let mut x = Float::with_val(prec, x);
                let mut v = Float::new(prec);
                let mut bits = 45u32;
                while bits < prec + 4 {
                    v.assign(coeffs[coeffs.len() - 1]);
                    for c in coeffs[..coeffs.len() - 1].iter().rev() {
                        v *= &x;
                        v += *c;
                    }
                    v -= &target;
                    let dprec = (bits + 8).clamp(53, 160);
                    if dprec == 53 {
                        v /= dp(x.to_f64());
                    } else {
                        let xd = Float::with_val(dprec, &x);
                        let n = coeffs.len();
                        let mut d = Float::with_val(dprec, coeffs[n - 1]) * (n - 1) as u32;
                        for (k, c) in coeffs.iter().enumerate().take(n - 1).skip(1).rev() {
                            d *= &xd;
                            d += Float::with_val(dprec, *c) * k as u32;
                        }
                        v /= &d;
                    }
                    x -= &v;
                    bits = (2 * bits).min(bits + dprec - 6);
                }
                x
            }
        }
    }
}

/// `p(1)` at working precision; polynomial warps are divided by it so that 1 is fixed exactly.
fn poly_at_one(coeffs: &[f64], prec: u32) -> Float {
    coeffs.iter().fold(Float::new(prec), |acc, c| acc + *c)
}

fn moebius_jet(a: f64, x: &Float) -> Jet {
    let prec = x.prec();
    let a = Float::with_val(prec, a);
    let am1 = Float::with_val(prec, &a - 1u32);
    let den = Float::with_val(prec, x * &am1) + 1u32;
    let v = Float::with_val(prec, x * &a) / &den;
    let den2 = Float::with_val(prec, den.square_ref());
    let d1 = Float::with_val(prec, &a / &den2);
    let d2 = Float::with_val(prec, &a * &am1) * -2i32 / (den2 * &den);
    Jet { v, d1, d2 }
}

/// Conjugate `h^{-1} ∘ A ∘ h` of an affine branch, in zoomed coordinates.
#[derive(Clone, Debug)]
pub struct ConjugateBranch {
    pub warp: Arc<Warp>,
    /// Global domain of the branch.
    pub x_lo: Float,
    pub x_hi: Float,
    /// Left endpoints of the seed domain and image, and the seed slope.
    pub u_lo: Float,
    pub v_lo: Float,
    pub slope: Float,
    /// Global image of the branch.
    pub y_lo: Float,
    pub y_hi: Float,
}

/// Branch families, all as increasing maps of [0,1] onto itself.
#[derive(Clone, Debug)]
pub enum BranchMap {
    Affine,
    /// `a t / (1 + (a - 1) t)`
    Moebius { a: f64 },
    /// `t + amp sin(pi t) / pi`, needs |amp| < 1.
    SineBump { amp: f64 },
    Conjugate(Box<ConjugateBranch>),
}

impl BranchMap {
    pub fn family(&self) -> &'static str {
        match self {
            BranchMap::Affine => "affine",
            BranchMap::Moebius { .. } => "moebius",
            BranchMap::SineBump { .. } => "perturbed_affine",
            BranchMap::Conjugate(_) => "conjugate",
        }
    }

    /// Fractional-linear families compose in closed form.
    pub fn is_fractional_linear(&self) -> bool {
        matches!(self, BranchMap::Affine | BranchMap::Moebius { .. })
    }

    pub fn eval(&self, t: &Float) -> Jet {
        let prec = t.prec();
        match self {
            BranchMap::Affine => Jet {
                v: t.clone(),
                d1: Float::with_val(prec, 1),
                d2: Float::new(prec),
            },
            BranchMap::Moebius { a } => moebius_jet(*a, t),
            BranchMap::SineBump { amp } => {
                let pi = Float::with_val(prec, Constant::Pi);
                let arg = Float::with_val(prec, &pi * t);
                let (s, c) = arg.sin_cos(Float::new(prec));
                let v = Float::with_val(prec, &s * *amp) / &pi + t;
                let d1 = Float::with_val(prec, &c * *amp) + 1u32;
                let d2 = Float::with_val(prec, &s * &pi) * (-amp);
                Jet { v, d1, d2 }
            }
            BranchMap::Conjugate(cb) => {
                let w = Float::with_val(prec, &cb.x_hi - &cb.x_lo);
                let x = Float::with_val(prec, t * &w) + &cb.x_lo;
                let hx = cb.warp.eval(&x);
                let s = Float::with_val(prec, &hx.v - &cb.u_lo) * &cb.slope + &cb.v_lo;
                let y = cb.warp.inverse(&s);
                let hy = cb.warp.eval(&y);
                // derivatives of h^{-1} at s
                let g1 = Float::with_val(prec, hy.d1.recip_ref());
                let g1_3 = Float::with_val(prec, g1.square_ref()) * &g1;
                let g2 = Float::with_val(prec, -&hy.d2) * &g1_3;
                let ds = Float::with_val(prec, &hx.d1 * &cb.slope) * &w;
                let w2 = Float::with_val(prec, w.square_ref());
                let dds = Float::with_val(prec, &hx.d2 * &cb.slope) * &w2;
                let span = Float::with_val(prec, &cb.y_hi - &cb.y_lo);
                let v = (y - &cb.y_lo) / &span;
                let d1 = Float::with_val(prec, &g1 * &ds) / &span;
                let ds2 = Float::with_val(prec, ds.square_ref());
                let d2 = (Float::with_val(prec, &g2 * &ds2) + Float::with_val(prec, &g1 * &dds)) / &span;
                Jet { v, d1, d2 }
            }
        }
    }

    /// Zoomed branch as a fractional-linear map, when it is one.
    pub fn as_mob(&self, prec: u32) -> Option<Mob> {
        match self {
            BranchMap::Affine => Some(Mob::identity(prec)),
            BranchMap::Moebius { a } => Some(Mob {
                p: Float::with_val(prec, *a),
                r: Float::new(prec),
                s: Float::with_val(prec, *a) - 1u32,
                t: Float::with_val(prec, 1),
            }),
            _ => None,
        }
    }
}

/// Amplitude completing a list of sine bumps to zero total nonlinearity.
///
/// Each bump contributes `ln((1 - a)/(1 + a)) = -2 artanh(a)`.
pub fn balancing_amplitude(others: &[f64]) -> f64 {
    -others.iter().map(|a| a.atanh()).sum::<f64>().tanh()
}
