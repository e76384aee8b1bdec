//! Generalized interval exchange maps at high precision, Rauzy–Veech induction
//! and level-wise analysis.

mod analysis;
pub mod branch;
pub mod quadrature;
mod renorm;

use std::sync::Arc;

use rug::Float;
use thiserror::Error;

use crate::combinatorics::{Letter, Permutation};

pub use analysis::{
    boundary_log_break, mean_nonlinearity_quadrature, zoom_branch, ZoomedBranch,
    break_invariance_check, break_points, c2_distance, level_break_log, mean_log_derivative,
    mean_nonlinearity, tower_total, BreakCheck, BreakRecord, C2Distance,
};
pub use branch::{balancing_amplitude, BranchMap, ConjugateBranch, Jet, Mob, Warp};
pub use renorm::{renormalize, rv_step, RenormState, ITINERARY_CAP};

#[derive(Debug, Error)]
pub enum GiemError {
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("connection at level {level}: competing lengths agree to working precision")]
    Connection { level: usize },
    #[error("precision exhausted at level {level}: |I^n| = {length:.3e} at {bits} bits; safe maximum depth is {safe_depth}")]
    Precision {
        level: usize,
        length: f64,
        bits: u32,
        safe_depth: usize,
    },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("not checkable: {0}")]
    NotCheckable(String),
}

pub type Result<T> = std::result::Result<T, GiemError>;

pub const DEFAULT_PRECISION: u32 = 256;

/// Closed-form description of the first-return branches: `h^{-1} ∘ M_a ∘ h`.
#[derive(Clone, Debug)]
pub struct FastForm {
    pub warp: Arc<Warp>,
    pub mats: Vec<Mob>,
}

/// A generalized interval exchange map on [0,1).
#[derive(Clone, Debug)]
pub struct Giem {
    pi: Permutation,
    prec: u32,
    domain: Vec<Float>,
    image: Vec<Float>,
    branches: Vec<BranchMap>,
    dom_left: Vec<Float>,
    img_left: Vec<Float>,
    fast: Option<FastForm>,
}

fn lefts(pi: &Permutation, row: u8, lengths: &[Float], prec: u32) -> Vec<Float> {
    let mut out = vec![Float::new(prec); lengths.len()];
    let mut acc = Float::new(prec);
    for a in pi.order(row) {
        out[a] = acc.clone();
        acc += &lengths[a];
    }
    out
}

fn normalized(lengths: &[Float], what: &str) -> Result<Vec<Float>> {
    let prec = lengths[0].prec();
    if lengths.iter().any(|x| *x <= 0) {
        return Err(GiemError::Invalid(format!("{what} lengths must be positive")));
    }
    let s = lengths.iter().fold(Float::new(prec), |acc, x| acc + x);
    if (s.to_f64() - 1.0).abs() > 1e-12 {
        return Err(GiemError::Invalid(format!("{what} lengths sum to {}", s.to_f64())));
    }
    Ok(lengths.iter().map(|x| Float::with_val(prec, x / &s)).collect())
}

impl Giem {
    /// Builds a map from zoomed branches. Lengths within 1e-12 of summing to one are
    /// rescaled to sum to one at working precision.
    pub fn new(
        pi: Permutation,
        domain: Vec<Float>,
        image: Vec<Float>,
        branches: Vec<BranchMap>,
        prec: u32,
    ) -> Result<Self> {
        let d = pi.d();
        if domain.len() != d || image.len() != d || branches.len() != d {
            return Err(GiemError::Invalid("one length and one branch per letter".into()));
        }
        let domain = normalized(&domain.into_iter().map(|x| Float::with_val(prec, x)).collect::<Vec<_>>(), "domain")?;
        let image = normalized(&image.into_iter().map(|x| Float::with_val(prec, x)).collect::<Vec<_>>(), "image")?;
        for (a, b) in branches.iter().enumerate() {
            check_branch(b, prec).map_err(|e| GiemError::Invalid(format!("letter {}: {e}", pi.name(a))))?;
        }
        let dom_left = lefts(&pi, 0, &domain, prec);
        let img_left = lefts(&pi, 1, &image, prec);
        let mut g = Giem {
            pi,
            prec,
            domain,
            image,
            branches,
            dom_left,
            img_left,
            fast: None,
        };
        if g.branches.iter().all(|b| b.is_fractional_linear()) {
            let mats = (0..d).map(|a| g.global_mob(a)).collect();
            g.fast = Some(FastForm {
                warp: Arc::new(Warp::Identity),
                mats,
            });
        }
        Ok(g)
    }

    /// Affine map with the given lengths and log-slopes; image lengths are
    /// `exp(omega) lambda` rescaled to sum to one.
    pub fn affine(pi: Permutation, lengths: &[f64], slopes: &[f64], prec: u32) -> Result<Self> {
        let dom: Vec<Float> = lengths.iter().map(|&x| Float::with_val(prec, x)).collect();
        let img = scaled_images(&dom, slopes, prec);
        Giem::new(pi, dom, img, vec![BranchMap::Affine; lengths.len()], prec)
    }

    /// `h^{-1} ∘ g ∘ h` for an affine map `g`.
    pub fn conjugate(seed: &Giem, warp: Warp) -> Result<Self> {
        warp.validate().map_err(GiemError::Invalid)?;
        if !seed.branches.iter().all(|b| matches!(b, BranchMap::Affine)) {
            return Err(GiemError::Invalid("conjugation needs an affine seed".into()));
        }
        let prec = seed.prec;
        let d = seed.d();
        let warp = Arc::new(warp);
        let mut dom = Vec::with_capacity(d);
        let mut img = Vec::with_capacity(d);
        let mut branches = Vec::with_capacity(d);
        for a in 0..d {
            let u_lo = seed.dom_left[a].clone();
            let u_hi = Float::with_val(prec, &u_lo + &seed.domain[a]);
            let v_lo = seed.img_left[a].clone();
            let v_hi = Float::with_val(prec, &v_lo + &seed.image[a]);
            let x_lo = warp.inverse(&u_lo);
            let x_hi = warp.inverse(&u_hi);
            let y_lo = warp.inverse(&v_lo);
            let y_hi = warp.inverse(&v_hi);
            dom.push(Float::with_val(prec, &x_hi - &x_lo));
            img.push(Float::with_val(prec, &y_hi - &y_lo));
            let slope = Float::with_val(prec, &seed.image[a] / &seed.domain[a]);
            branches.push(BranchMap::Conjugate(Box::new(ConjugateBranch {
                warp: warp.clone(),
                x_lo,
                x_hi,
                u_lo,
                v_lo,
                slope,
                y_lo,
                y_hi,
            })));
        }
        let mut g = Giem::new(seed.pi.clone(), dom, img, branches, prec)?;
        g.fast = Some(FastForm {
            warp,
            mats: (0..d).map(|a| seed.global_mob(a)).collect(),
        });
        Ok(g)
    }

    pub fn pi(&self) -> &Permutation {
        &self.pi
    }

    pub fn d(&self) -> usize {
        self.pi.d()
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn domain_lengths(&self) -> &[Float] {
        &self.domain
    }

    pub fn image_lengths(&self) -> &[Float] {
        &self.image
    }

    pub fn branches(&self) -> &[BranchMap] {
        &self.branches
    }

    pub fn dom_left(&self, a: Letter) -> &Float {
        &self.dom_left[a]
    }

    pub fn img_left(&self, a: Letter) -> &Float {
        &self.img_left[a]
    }

    pub fn fast(&self) -> Option<&FastForm> {
        self.fast.as_ref()
    }

    /// Drops the closed form so that every evaluation iterates the base map.
    pub fn without_fast_form(mut self) -> Self {
        self.fast = None;
        self
    }

    /// Standard exchange: affine branches with equal domain and image lengths.
    pub fn is_isometric(&self) -> bool {
        self.branches.iter().all(|b| matches!(b, BranchMap::Affine))
            && self.domain.iter().zip(&self.image).all(|(a, b)| a == b)
    }

    /// Branch of `a` as a fractional-linear map in global coordinates.
    fn global_mob(&self, a: Letter) -> Mob {
        let prec = self.prec;
        let z = self.branches[a].as_mob(prec).expect("fractional-linear branch");
        // t = (x - lo) / lam, y = c + mu z(t)
        let lam = &self.domain[a];
        let lo = &self.dom_left[a];
        let mu = &self.image[a];
        let c = &self.img_left[a];
        let inner = Mob {
            p: Float::with_val(prec, 1),
            r: Float::with_val(prec, -lo),
            s: Float::new(prec),
            t: lam.clone(),
        };
        let outer = Mob {
            p: mu.clone(),
            r: c.clone(),
            s: Float::new(prec),
            t: Float::with_val(prec, 1),
        };
        outer.after(&z).after(&inner)
    }

    /// Letter whose domain contains `x`; points outside [0,1) go to the nearest end.
    pub fn letter_at(&self, x: &Float) -> Letter {
        let order = self.pi.order(0);
        let mut cur = order[0];
        for &a in &order[1..] {
            if *x >= self.dom_left[a] {
                cur = a;
            } else {
                break;
            }
        }
        cur
    }

    /// Branch `a` in global coordinates, extended continuously to its closed domain.
    pub fn eval_branch(&self, a: Letter, x: &Float) -> Jet {
        let prec = self.prec;
        let lam = &self.domain[a];
        let t = Float::with_val(prec, x - &self.dom_left[a]) / lam;
        let z = self.branches[a].eval(&t);
        let mu = &self.image[a];
        let scale = Float::with_val(prec, mu / lam);
        Jet {
            v: Float::with_val(prec, &z.v * mu) + &self.img_left[a],
            d1: Float::with_val(prec, &z.d1 * &scale),
            d2: Float::with_val(prec, &z.d2 * &scale) / lam,
        }
    }

    pub fn eval(&self, x: &Float) -> Jet {
        self.eval_branch(self.letter_at(x), x)
    }

    /// Value of branch `a` at `x`, skipping derivatives where the family allows.
    pub fn value_branch(&self, a: Letter, x: &Float) -> Float {
        match (&self.fast, &self.branches[a]) {
            (Some(ff), _) if ff.warp.is_identity() => ff.mats[a].value(x),
            (Some(ff), BranchMap::Conjugate(_)) => ff.warp.inverse(&ff.mats[a].value(&ff.warp.value(x))),
            _ => self.eval_branch(a, x).v,
        }
    }

    /// Value and first derivative of branch `a`.
    pub fn value_d1_branch(&self, a: Letter, x: &Float) -> (Float, Float) {
        match &self.fast {
            Some(ff) => {
                let hx = ff.warp.eval(x);
                let m = ff.mats[a].eval(&hx.v);
                let y = ff.warp.inverse(&m.v);
                let hy = ff.warp.eval(&y);
                let d = Float::with_val(self.prec, &hx.d1 * &m.d1) / &hy.d1;
                (y, d)
            }
            None => {
                let j = self.eval_branch(a, x);
                (j.v, j.d1)
            }
        }
    }
}

fn check_branch(b: &BranchMap, prec: u32) -> std::result::Result<(), String> {
    match b {
        BranchMap::Moebius { a } if !(*a > 0.0 && a.is_finite()) => return Err(format!("Moebius parameter {a}")),
        BranchMap::SineBump { amp } if !(amp.abs() < 1.0) => return Err(format!("sine amplitude {amp}")),
        _ => {}
    }
    let tol = Float::with_val(prec, Float::i_exp(1, 8 - prec as i32));
    let z0 = b.eval(&Float::new(prec));
    let z1 = b.eval(&Float::with_val(prec, 1));
    if z0.v.clone().abs() > tol || Float::with_val(prec, &z1.v - 1u32).abs() > tol {
        return Err("branch does not fix 0 and 1".into());
    }
    for i in 0..=1024u32 {
        let t = Float::with_val(prec, i) / 1024u32;
        if b.eval(&t).d1 <= 0 {
            return Err(format!("derivative not positive at t = {}", i as f64 / 1024.0));
        }
    }
    Ok(())
}

/// `exp(omega) lambda`, rescaled to sum to one.
pub fn scaled_images(dom: &[Float], slopes: &[f64], prec: u32) -> Vec<Float> {
    let raw: Vec<Float> = dom
        .iter()
        .zip(slopes)
        .map(|(l, w)| Float::with_val(prec, l * Float::with_val(prec, w).exp()))
        .collect();
    let s = raw.iter().fold(Float::new(prec), |acc, x| acc + x);
    raw.into_iter().map(|x| x / &s).collect()
}
