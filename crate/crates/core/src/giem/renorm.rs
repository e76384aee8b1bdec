//! Map-level Rauzy–Veech induction.

use std::sync::Arc;

use num_bigint::BigUint;
use rug::Float;

use super::{FastForm, Giem, GiemError, Jet, Mob, Result};
use crate::combinatorics::{rauzy_move, Letter, Permutation, Sequence};

/// First-return map `R^n f` on `I^n = [0, |I^n|)`.
///
/// Intervals are stored by their endpoints; domains tile `I^n` in `pi0` order and
/// images tile it in `pi1` order.
#[derive(Clone, Debug)]
pub struct RenormState {
    pub level: usize,
    pub pi: Permutation,
    pub base: Arc<Giem>,
    pub length: Float,
    pub dom_lo: Vec<Float>,
    pub dom_hi: Vec<Float>,
    pub img_lo: Vec<Float>,
    pub img_hi: Vec<Float>,
    pub q: Vec<BigUint>,
    /// Base letters visited by each branch, in order; dropped once their total
    /// length passes [`ITINERARY_CAP`].
    pub itin: Option<Vec<Arc<Vec<u8>>>>,
    /// Composed fractional-linear branches in warp coordinates.
    pub mats: Option<Vec<Mob>>,
    pub seq: Sequence,
}

/// Largest total itinerary length kept per state.
pub const ITINERARY_CAP: usize = 1 << 22;

fn compose_jets(outer: &Jet, inner: &Jet) -> Jet {
    Jet::compose(outer, inner)
}

/// `h^{-1} ∘ m ∘ h` with two derivatives.
fn conj_jet(ff: &FastForm, m: &Mob, x: &Float) -> Jet {
    let prec = x.prec();
    let hx = ff.warp.eval(x);
    let inner = compose_jets(&m.eval(&hx.v), &hx);
    let y = ff.warp.inverse(&inner.v);
    let hy = ff.warp.eval(&y);
    let g1 = Float::with_val(prec, hy.d1.recip_ref());
    let g1_3 = Float::with_val(prec, g1.square_ref()) * &g1;
    let g2 = Float::with_val(prec, -&hy.d2) * g1_3;
    compose_jets(&Jet { v: y, d1: g1, d2: g2 }, &inner)
}

impl RenormState {
    pub fn initial(f: Arc<Giem>) -> Self {
        let d = f.d();
        let prec = f.prec();
        let dom_lo: Vec<Float> = (0..d).map(|a| f.dom_left(a).clone()).collect();
        let dom_hi = (0..d).map(|a| Float::with_val(prec, &dom_lo[a] + &f.domain_lengths()[a])).collect();
        let img_lo: Vec<Float> = (0..d).map(|a| f.img_left(a).clone()).collect();
        let img_hi = (0..d).map(|a| Float::with_val(prec, &img_lo[a] + &f.image_lengths()[a])).collect();
        RenormState {
            level: 0,
            pi: f.pi().clone(),
            length: Float::with_val(prec, 1),
            dom_lo,
            dom_hi,
            img_lo,
            img_hi,
            q: vec![BigUint::from(1u32); d],
            itin: Some((0..d).map(|a| Arc::new(vec![a as u8])).collect()),
            mats: f.fast().map(|ff| ff.mats.clone()),
            seq: Sequence::new(f.pi().clone()),
            base: f,
        }
    }

    pub fn d(&self) -> usize {
        self.pi.d()
    }

    pub fn prec(&self) -> u32 {
        self.base.prec()
    }

    pub fn dom_len(&self, a: Letter) -> Float {
        Float::with_val(self.prec(), &self.dom_hi[a] - &self.dom_lo[a])
    }

    pub fn img_len(&self, a: Letter) -> Float {
        Float::with_val(self.prec(), &self.img_hi[a] - &self.img_lo[a])
    }

    /// Domain lengths divided by `|I^n|`.
    pub fn normalized_domain(&self) -> Vec<f64> {
        (0..self.d()).map(|a| Float::with_val(self.prec(), self.dom_len(a) / &self.length).to_f64()).collect()
    }

    pub fn normalized_image(&self) -> Vec<f64> {
        (0..self.d()).map(|a| Float::with_val(self.prec(), self.img_len(a) / &self.length).to_f64()).collect()
    }

    /// Interior boundaries of the domain partition, left to right.
    pub fn cut_points(&self) -> Vec<Float> {
        self.pi.order(0)[1..].iter().map(|&a| self.dom_lo[a].clone()).collect()
    }

    pub fn q_f64(&self) -> Vec<f64> {
        self.q.iter().map(|q| q.to_string().parse().unwrap()).collect()
    }

    /// Itinerary of branch `a`, if still stored.
    pub fn itinerary(&self, a: Letter) -> Result<&[u8]> {
        self.itin
            .as_ref()
            .map(|v| v[a].as_slice())
            .ok_or_else(|| GiemError::Budget(format!("itineraries dropped above {ITINERARY_CAP} entries at level {}", self.level)))
    }

    fn fast(&self) -> Option<(&FastForm, &Vec<Mob>)> {
        Some((self.base.fast()?, self.mats.as_ref()?))
    }

    /// Letter whose domain at this level contains `x`.
    pub fn letter_at(&self, x: &Float) -> Letter {
        let order = self.pi.order(0);
        let mut cur = order[0];
        for &a in &order[1..] {
            if *x >= self.dom_lo[a] {
                cur = a;
            } else {
                break;
            }
        }
        cur
    }

    /// `R^n f` at `x` with two derivatives.
    pub fn eval(&self, x: &Float) -> Result<Jet> {
        if *x < 0 || *x >= self.length {
            return Err(GiemError::Invalid(format!("point {} outside I^{}", x.to_f64(), self.level)));
        }
        self.eval_letter(self.letter_at(x), x)
    }

    /// Branch `a` of `R^n f`, extended to the closed domain.
    pub fn eval_letter(&self, a: Letter, x: &Float) -> Result<Jet> {
        match self.fast() {
            Some((ff, mats)) => Ok(conj_jet(ff, &mats[a], x)),
            None => self.eval_iterated(a, x),
        }
    }

    /// Branch `a` by iterating the base map along the stored itinerary.
    pub fn eval_iterated(&self, a: Letter, x: &Float) -> Result<Jet> {
        let prec = self.prec();
        let tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32 / 2)));
        let mut acc = Jet {
            v: x.clone(),
            d1: Float::with_val(prec, 1),
            d2: Float::new(prec),
        };
        for (i, &b) in self.itinerary(a)?.iter().enumerate() {
            let b = b as Letter;
            let lo = Float::with_val(prec, self.base.dom_left(b) - &tol);
            let hi = Float::with_val(prec, self.base.dom_left(b) + &self.base.domain_lengths()[b]) + &tol;
            if acc.v < lo || acc.v > hi {
                return Err(GiemError::Invalid(format!(
                    "orbit left the tower of {} at iterate {i}",
                    self.pi.name(a)
                )));
            }
            let j = self.base.eval_branch(b, &acc.v);
            acc = compose_jets(&j, &acc);
        }
        Ok(acc)
    }

    pub fn value_letter(&self, a: Letter, x: &Float) -> Result<Float> {
        match self.fast() {
            Some((ff, mats)) if ff.warp.is_identity() => Ok(mats[a].value(x)),
            Some((ff, mats)) => Ok(ff.warp.inverse(&mats[a].value(&ff.warp.value(x)))),
            None => Ok(self.eval_iterated(a, x)?.v),
        }
    }

    /// Value and first derivative of branch `a`.
    pub fn value_d1(&self, a: Letter, x: &Float) -> Result<(Float, Float)> {
        match self.fast() {
            Some((ff, mats)) => {
                let prec = self.prec();
                let hx = ff.warp.eval(x);
                let m = mats[a].eval(&hx.v);
                let y = ff.warp.inverse(&m.v);
                let hy = ff.warp.eval(&y);
                let d = Float::with_val(prec, &hx.d1 * &m.d1) / &hy.d1;
                Ok((y, d))
            }
            None => {
                let j = self.eval_iterated(a, x)?;
                Ok((j.v, j.d1))
            }
        }
    }

    /// Solves `R^n f|_a (x) = y` on the closed domain of `a`.
    pub fn inverse_letter(&self, a: Letter, y: &Float) -> Result<Float> {
        let prec = self.prec();
        if let Some((ff, mats)) = self.fast() {
            let u = ff.warp.value(y);
            return Ok(ff.warp.inverse(&mats[a].inverse().value(&u)));
        }
        // safeguarded Newton inside the bracket
        let (mut lo, mut hi) = (self.dom_lo[a].clone(), self.dom_hi[a].clone());
        let frac = Float::with_val(prec, y - &self.img_lo[a]) / self.img_len(a);
        let mut x = Float::with_val(prec, &frac * self.dom_len(a)) + &lo;
        let stop = Float::with_val(prec, Float::i_exp(1, 8 - prec as i32)) * &self.length;
        for _ in 0..400 {
            let (v, d) = self.value_d1(a, &x)?;
            if v > *y {
                hi = x.clone();
            } else {
                lo = x.clone();
            }
            let step = Float::with_val(prec, &v - y) / &d;
            let mut nx = Float::with_val(prec, &x - &step);
            if !(nx > lo && nx < hi) {
                nx = Float::with_val(prec, &lo + &hi) / 2u32;
            }
            let moved = Float::with_val(prec, &nx - &x).abs();
            x = nx;
            if moved <= stop || Float::with_val(prec, &hi - &lo) <= stop {
                return Ok(x);
            }
        }
        Err(GiemError::Invalid(format!("branch inversion did not converge at level {}", self.level)))
    }

    /// Floors of the tower over `I^n_a` in warp coordinates, for maps with a fast form.
    pub fn floors_warped(&self, a: Letter) -> Result<Option<Vec<(Float, Float)>>> {
        let Some(ff) = self.base.fast() else {
            return Ok(None);
        };
        let itin = self.itinerary(a)?;
        let h = &ff.warp;
        let mut ul = h.value(&self.dom_lo[a]);
        let mut ur = h.value(&self.dom_hi[a]);
        let mut out = Vec::with_capacity(itin.len());
        out.push((ul.clone(), ur.clone()));
        for &b in &itin[..itin.len() - 1] {
            ul = ff.mats[b as usize].value(&ul);
            ur = ff.mats[b as usize].value(&ur);
            out.push((ul.clone(), ur.clone()));
        }
        Ok(Some(out))
    }

    /// Floors `f^i(I^n_a)`, `0 ≤ i < q_a`, as endpoint pairs.
    pub fn floors(&self, a: Letter) -> Result<Vec<(Float, Float)>> {
        let itin = self.itinerary(a)?;
        let mut out = Vec::with_capacity(itin.len());
        match self.base.fast() {
            Some(ff) => {
                let h = &ff.warp;
                out.push((self.dom_lo[a].clone(), self.dom_hi[a].clone()));
                for (l, r) in self.floors_warped(a)?.unwrap().into_iter().skip(1) {
                    out.push((h.inverse(&l), h.inverse(&r)));
                }
            }
            None => {
                let mut l = self.dom_lo[a].clone();
                let mut r = self.dom_hi[a].clone();
                for &b in itin.iter() {
                    out.push((l.clone(), r.clone()));
                    l = self.base.eval_branch(b as usize, &l).v;
                    r = self.base.eval_branch(b as usize, &r).v;
                }
            }
        }
        Ok(out)
    }

    /// The composed branch of `a` in warp coordinates, if the map has a closed form.
    pub fn mob(&self, a: Letter) -> Option<&Mob> {
        self.mats.as_ref().map(|m| &m[a])
    }
}

/// One step of Rauzy–Veech induction on the map.
pub fn rv_step(s: &RenormState) -> Result<RenormState> {
    let prec = s.prec();
    let guard = Float::with_val(prec, Float::i_exp(1, 64 - prec as i32));
    if s.length < guard {
        return Err(GiemError::Precision {
            level: s.level,
            length: s.length.to_f64(),
            bits: prec,
            safe_depth: s.level.saturating_sub(1),
        });
    }
    let a0 = s.pi.last(0);
    let a1 = s.pi.last(1);
    let dl = s.dom_len(a0);
    let il = s.img_len(a1);
    let gap = Float::with_val(prec, &dl - &il).abs();
    let tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32 / 2))) * &s.length;
    if gap <= tol {
        return Err(GiemError::Connection { level: s.level });
    }
    let eps = if dl > il { 0 } else { 1 };
    let step = rauzy_move(&s.pi, eps).map_err(|e| GiemError::Invalid(e.to_string()))?;
    let (w, l) = (step.winner, step.loser);
    let mut n = s.clone();
    n.level += 1;
    n.pi = step.next.clone();
    n.seq.steps.push(step);
    if eps == 0 {
        // winner a0 keeps its domain up to the loser's image
        let c = s.img_lo[a1].clone();
        let z = s.value_letter(a0, &c)?;
        n.length = c.clone();
        n.dom_hi[a0] = c;
        n.img_hi[a0] = z.clone();
        n.img_lo[a1] = z;
        n.img_hi[a1] = s.img_hi[a0].clone();
    } else {
        // winner a1 is cut where its image meets I_{a0}
        let a = s.dom_lo[a0].clone();
        let y = s.inverse_letter(a1, &a)?;
        if !(y > s.dom_lo[a1] && y < s.dom_hi[a1]) {
            return Err(GiemError::Invalid(format!("split point outside the winner at level {}", s.level)));
        }
        n.length = a.clone();
        n.dom_hi[a1] = y.clone();
        n.img_hi[a1] = a;
        n.dom_lo[a0] = y;
        n.dom_hi[a0] = s.dom_hi[a1].clone();
    }
    // the loser's new branch runs through the old loser and winner branches;
    // type 0 starts with the loser, type 1 with the winner
    let (first, second) = if eps == 0 { (l, w) } else { (w, l) };
    if let Some(it) = n.itin.as_mut() {
        let total: usize = it.iter().map(|v| v.len()).sum::<usize>() + it[w].len();
        if total > ITINERARY_CAP {
            n.itin = None;
        } else {
            let mut joined = Vec::with_capacity(it[first].len() + it[second].len());
            joined.extend_from_slice(&it[first]);
            joined.extend_from_slice(&it[second]);
            it[l] = Arc::new(joined);
        }
    }
    if n.itin.is_none() && n.mats.is_none() {
        return Err(GiemError::Budget(format!(
            "level {} needs more than {ITINERARY_CAP} stored base steps",
            n.level
        )));
    }
    n.q[l] = &s.q[l] + &s.q[w];
    if let (Some(m), Some(old)) = (n.mats.as_mut(), s.mats.as_ref()) {
        m[l] = old[second].after(&old[first]);
    }
    Ok(n)
}

/// States `R^0 f, ..., R^n f`.
pub fn renormalize(f: &Arc<Giem>, steps: usize) -> Result<Vec<RenormState>> {
    let mut out = vec![RenormState::initial(f.clone())];
    for _ in 0..steps {
        let next = rv_step(out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden(prec: u32) -> Arc<Giem> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let pi = Permutation::from_rows("AB", "BA").unwrap();
        let p = prec;
        let l0 = Float::with_val(p, 5u32).sqrt();
        let phi_hp = (l0 + 1u32) / 2u32;
        let a = Float::with_val(p, 2u32) - &phi_hp;
        let b = Float::with_val(p, &phi_hp - 1u32);
        let _ = phi;
        let g = Giem::new(
            pi,
            vec![a.clone(), b.clone()],
            vec![a, b],
            vec![super::super::BranchMap::Affine; 2],
            p,
        )
        .unwrap();
        Arc::new(g)
    }

    #[test]
    fn golden_rotation_alternates_with_fibonacci_times() {
        let states = renormalize(&golden(256), 40).unwrap();
        let types = states.last().unwrap().seq.types();
        for (i, t) in types.iter().enumerate() {
            assert_eq!(*t as usize, i % 2);
        }
        let fib = |k: usize| {
            let (mut a, mut b) = (0u64, 1u64);
            for _ in 0..k {
                (a, b) = (b, a + b);
            }
            a
        };
        // with F_1 = F_2 = 1 the times after 2m steps are F_{2m+1} and F_{2m+2}
        for m in 1..=20 {
            let s = &states[2 * m];
            let mut q: Vec<u64> = s.q.iter().map(|x| x.to_string().parse().unwrap()).collect();
            q.sort();
            assert_eq!(q, vec![fib(2 * m + 1), fib(2 * m + 2)], "level {}", 2 * m);
        }
    }

    #[test]
    fn zero_steps_is_initial_state() {
        let s = renormalize(&golden(128), 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].length, 1);
    }

    #[test]
    fn closed_form_matches_iteration() {
        let pi = Permutation::from_rows("ABC", "CAB").unwrap();
        let seed = Giem::affine(pi, &[0.31, 0.42, 0.27], &[0.12, -0.2, 0.05], 256).unwrap();
        let f = Arc::new(Giem::conjugate(&seed, super::super::Warp::flat(0.2)).unwrap());
        let states = renormalize(&f, 14).unwrap();
        for s in &states {
            for a in 0..3 {
                let x = (Float::with_val(256, &s.dom_lo[a] * 3u32) + &s.dom_hi[a]) / 4u32;
                let c = s.eval_letter(a, &x).unwrap();
                let it = s.eval_iterated(a, &x).unwrap();
                assert!(Float::with_val(256, &c.v - &it.v).abs() < 1e-60);
                assert!((Float::with_val(256, &c.d1 / &it.d1) - 1u32).abs() < 1e-55);
                let rel = Float::with_val(256, &c.d2 - &it.d2).abs() / (it.d2.clone().abs() + 1u32);
                assert!(rel < 1e-40, "level {} letter {a}", s.level);
            }
        }
    }

    #[test]
    fn generic_inversion_agrees_with_closed_form() {
        let pi = Permutation::from_rows("ABC", "CAB").unwrap();
        let seed = Giem::affine(pi, &[0.31, 0.42, 0.27], &[0.12, -0.2, 0.05], 256).unwrap();
        let f = Arc::new(Giem::conjugate(&seed, super::super::Warp::Moebius { a: 1.3 }).unwrap());
        let slow = Arc::new((*f).clone().without_fast_form());
        let a = renormalize(&f, 12).unwrap();
        let b = renormalize(&slow, 12).unwrap();
        assert_eq!(a[12].seq.types(), b[12].seq.types());
        for x in 0..3 {
            let diff = Float::with_val(256, &a[12].dom_lo[x] - &b[12].dom_lo[x]).abs();
            assert!(diff < 1e-60);
        }
    }
}
