//! Level-wise quantities: mean log-derivatives, zoomed branches, C² distance,
//! tower sums and breaks.

use rug::Float;
use serde::Serialize;

use super::quadrature::gauss_legendre;
use super::{Giem, GiemError, Jet, RenormState, Result, Warp};
use crate::combinatorics::Letter;

/// `∫ D²f/Df` over [0,1), summed in closed form branch by branch.
pub fn mean_nonlinearity(f: &Giem) -> f64 {
    let prec = f.prec();
    let mut total = Float::new(prec);
    for a in 0..f.d() {
        let lo = f.dom_left(a).clone();
        let hi = Float::with_val(prec, &lo + &f.domain_lengths()[a]);
        total += f.eval_branch(a, &hi).d1.ln();
        total -= f.eval_branch(a, &lo).d1.ln();
    }
    total.to_f64()
}

/// The same integral by composite Gauss–Legendre quadrature of `D²f/Df`.
pub fn mean_nonlinearity_quadrature(f: &Giem, nodes: usize, panels: usize) -> f64 {
    let prec = f.prec();
    let rule = gauss_legendre(nodes);
    let mut total = Float::new(prec);
    for a in 0..f.d() {
        let lam = &f.domain_lengths()[a];
        let w = Float::with_val(prec, lam / panels as u32);
        for p in 0..panels {
            let left = Float::with_val(prec, &w * p as u32) + f.dom_left(a);
            for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                let x = Float::with_val(prec, &w * *t) + &left;
                let j = f.eval_branch(a, &x);
                total += Float::with_val(prec, &j.d2 / &j.d1) * &w * *wt;
            }
        }
    }
    total.to_f64()
}

/// Zoomed branch of `R^n f` for one letter, an increasing map of [0,1] onto itself.
pub struct ZoomedBranch<'a> {
    state: &'a RenormState,
    letter: Letter,
}

impl ZoomedBranch<'_> {
    pub fn eval(&self, t: &Float) -> Result<Jet> {
        let s = self.state;
        let a = self.letter;
        let prec = s.prec();
        let lam = s.dom_len(a);
        let mu = s.img_len(a);
        let x = Float::with_val(prec, t * &lam) + &s.dom_lo[a];
        let j = s.eval_letter(a, &x)?;
        let ratio = Float::with_val(prec, &lam / &mu);
        Ok(Jet {
            v: (j.v - &s.img_lo[a]) / &mu,
            d1: j.d1 * &ratio,
            d2: j.d2 * ratio * lam,
        })
    }
}

pub fn zoom_branch(state: &RenormState, letter: Letter) -> ZoomedBranch<'_> {
    ZoomedBranch { state, letter }
}

/// `L^n_a`: the average of `ln D R^n f` over `I^n_a`.
pub fn mean_log_derivative(state: &RenormState, nodes: usize) -> Result<Vec<f64>> {
    let prec = state.prec();
    let rule = gauss_legendre(nodes);
    (0..state.d())
        .map(|a| {
            let lam = state.dom_len(a);
            let mut acc = Float::new(prec);
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = Float::with_val(prec, &lam * *t) + &state.dom_lo[a];
                let (_, d) = state.value_d1(a, &x)?;
                if d <= 0 {
                    return Err(GiemError::Invalid(format!("non-positive derivative at level {}", state.level)));
                }
                acc += d.ln() * *w;
            }
            Ok(acc.to_f64())
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct C2Distance {
    pub total: f64,
    /// Largest per-letter sum of the three sup-norms.
    pub branches: f64,
    pub domain_l1: f64,
    pub image_l1: f64,
}

pub const GRID: usize = 257;

/// C² distance between the quadruples of two renormalized maps.
pub fn c2_distance(a: &RenormState, b: &RenormState) -> Result<C2Distance> {
    if a.pi != b.pi {
        return Err(GiemError::Invalid(format!("permutations differ: {} vs {}", a.pi, b.pi)));
    }
    let prec = a.prec().max(b.prec());
    let mut branches = 0.0f64;
    for l in 0..a.d() {
        let (za, zb) = (zoom_branch(a, l), zoom_branch(b, l));
        let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..GRID {
            let t = Float::with_val(prec, k as u32) / (GRID as u32 - 1);
            let (ja, jb) = (za.eval(&t)?, zb.eval(&t)?);
            s0 = s0.max(Float::with_val(prec, &ja.v - &jb.v).abs().to_f64());
            s1 = s1.max(Float::with_val(prec, &ja.d1 - &jb.d1).abs().to_f64());
            s2 = s2.max(Float::with_val(prec, &ja.d2 - &jb.d2).abs().to_f64());
        }
        branches = branches.max(s0 + s1 + s2);
    }
    let l1 = |x: Vec<f64>, y: Vec<f64>| x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>();
    let domain_l1 = l1(a.normalized_domain(), b.normalized_domain());
    let image_l1 = l1(a.normalized_image(), b.normalized_image());
    Ok(C2Distance {
        total: branches + domain_l1 + image_l1,
        branches,
        domain_l1,
        image_l1,
    })
}

/// `Σ_a Σ_{i<q_a} |f^i(I^n_a)|`, the total length of the Rauzy–Veech towers.
///
/// For standard exchanges the floors are translates and this is `Σ q_a |I^n_a|`.
pub fn tower_total(state: &RenormState) -> Result<Float> {
    let prec = state.prec();
    let mut total = Float::new(prec);
    if state.base.is_isometric() {
        for a in 0..state.d() {
            let q = Float::with_val(prec, state.q[a].to_string().parse::<rug::Integer>().unwrap());
            total += q * state.dom_len(a);
        }
        return Ok(total);
    }
    if let Some(ff) = state.base.fast() {
        if !ff.warp.is_identity() {
            return warped_total(state, &ff.warp);
        }
    }
    for a in 0..state.d() {
        for (l, r) in state.floors(a)? {
            total += r - l;
        }
    }
    Ok(total)
}

/// Sum of `H(r) - H(l)` over the floors `[l, r)` in warp coordinates, `H = h^{-1}`.
///
/// With the floors sorted the sum is `H(r_last) - H(l_first)` minus the terms
/// `H(l_{i+1}) - H(r_i)`. Gaps below 2^-100 use `H'(r_i) δ_i`, whose error is
/// `O(δ_i^2)`; larger gaps use two inversions.
fn warped_total(state: &RenormState, h: &Warp) -> Result<Float> {
    let prec = state.prec();
    let mut fl = Vec::new();
    for a in 0..state.d() {
        fl.extend(state.floors_warped(a)?.unwrap_or_default());
    }
    fl.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let (Some(first), Some(last)) = (fl.first(), fl.last()) else {
        return Ok(Float::new(prec));
    };
    let mut total = h.inverse(&last.1) - h.inverse(&first.0);
    let cut = Float::with_val(prec, Float::i_exp(1, -100));
    for w in fl.windows(2) {
        let (r, l) = (&w[0].1, &w[1].0);
        let gap = Float::with_val(prec, l - r);
        if Float::with_val(prec, gap.abs_ref()) > cut {
            total -= h.inverse(l) - h.inverse(r);
        } else if !gap.is_zero() {
            let x = h.inverse(&Float::with_val(64, r));
            total -= gap / h.eval(&x).d1;
        }
    }
    Ok(total)
}

/// A boundary point of the partition where the one-sided derivatives differ.
#[derive(Clone, Debug, Serialize)]
pub struct BreakRecord {
    pub point: f64,
    /// `Df(x-)/Df(x+)`, with `x-` read on the circle at 0.
    pub ratio: f64,
    pub letter: String,
}

/// `ln(Df(x-)/Df(x+))` at the left endpoint of `I_a`; at 0 the left side is the end of [0,1).
pub fn boundary_log_break(f: &Giem, a: Letter) -> Float {
    let prec = f.prec();
    let order = f.pi().order(0);
    let p = f.pi().pos(0, a);
    let left = if p == 0 { order[f.d() - 1] } else { order[p - 1] };
    let x_left = Float::with_val(prec, f.dom_left(left) + &f.domain_lengths()[left]);
    let dl = f.eval_branch(left, &x_left).d1;
    let dr = f.eval_branch(a, f.dom_left(a)).d1;
    (dl / dr).ln()
}

/// All genuine breaks at partition boundaries, including 0.
pub fn break_points(f: &Giem) -> Vec<BreakRecord> {
    let tol = 2f64.powi(-(f.prec() as i32 / 2)).max(1e-300);
    f.pi()
        .order(0)
        .into_iter()
        .filter_map(|a| {
            let lb = boundary_log_break(f, a).to_f64();
            (lb.abs() > tol).then(|| BreakRecord {
                point: f.dom_left(a).to_f64(),
                ratio: lb.exp(),
                letter: f.pi().name(a).to_string(),
            })
        })
        .collect()
}

/// `ln BP` of `R^n f` at the left endpoint of `I^n_gamma`, from the two branches of `R^n f`.
pub fn level_break_log(state: &RenormState, gamma: Letter) -> Result<Float> {
    let p = state.pi.pos(0, gamma);
    if p == 0 {
        return Err(GiemError::NotCheckable(format!("{} is first in the top row", state.pi.name(gamma))));
    }
    let beta = state.pi.order(0)[p - 1];
    let x = state.dom_lo[gamma].clone();
    let (_, dl) = state.value_d1(beta, &state.dom_hi[beta])?;
    let (_, dr) = state.value_d1(gamma, &x)?;
    Ok((dl / dr).ln())
}

/// Result of comparing a break of `R^n f` with the base break its orbit reaches.
#[derive(Clone, Debug, Serialize)]
pub struct BreakCheck {
    pub level: usize,
    pub gamma: String,
    pub alpha: String,
    /// Iterate at which the orbit of the boundary reaches `∂I_alpha`.
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

/// Checks `BP_{R^n f}(∂I^n_gamma) = BP_f(∂I_alpha)` where `f^j(∂I^n_gamma) = ∂I_alpha`.
pub fn break_invariance_check(state: &RenormState, gamma: Letter) -> Result<BreakCheck> {
    let prec = state.prec();
    let pi = &state.pi;
    let disc = pi.discontinuities();
    if disc.len() != 1 || state.base.pi().discontinuities().len() != 1 {
        return Err(GiemError::NotCheckable("the map is not of rotation type at this level".into()));
    }
    if disc[0] == gamma || pi.pos(0, gamma) == 0 {
        return Err(GiemError::NotCheckable(format!("letter {} excluded", pi.name(gamma))));
    }
    let beta = pi.order(0)[pi.pos(0, gamma) - 1];
    if state.q[beta] != state.q[gamma] {
        return Err(GiemError::NotCheckable("neighbouring towers differ in height".into()));
    }
    let (ib, ig) = (state.itinerary(beta)?, state.itinerary(gamma)?);
    let j = (0..ig.len())
        .find(|&i| ib[i] != ig[i])
        .ok_or_else(|| GiemError::NotCheckable("identical itineraries".into()))?;
    // follow the common part of the orbit
    let base = &state.base;
    let mut x = state.dom_lo[gamma].clone();
    for &b in &ig[..j] {
        x = base.value_branch(b as usize, &x);
    }
    let alpha = ig[j] as usize;
    let left = ib[j] as usize;
    let bp = base.pi();
    if bp.pos(0, alpha) == 0 || bp.order(0)[bp.pos(0, alpha) - 1] != left {
        return Err(GiemError::NotCheckable("orbit does not reach an interior boundary".into()));
    }
    let miss = Float::with_val(prec, &x - base.dom_left(alpha)).abs().to_f64();
    if miss > 2f64.powi(-(prec as i32 / 3)) {
        return Err(GiemError::NotCheckable(format!("orbit misses ∂I_{} by {miss:e}", bp.name(alpha))));
    }
    let lhs = level_break_log(state, gamma)?;
    let rhs = boundary_log_break(base, alpha);
    let diff = Float::with_val(prec, &lhs - &rhs).abs().to_f64();
    Ok(BreakCheck {
        level: state.level,
        gamma: pi.name(gamma).to_string(),
        alpha: bp.name(alpha).to_string(),
        j,
        lhs: lhs.to_f64(),
        rhs: rhs.to_f64(),
        diff,
    })
}
