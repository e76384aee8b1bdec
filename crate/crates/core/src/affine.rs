//! Affine interval exchange maps, transfer matrices and affine models of
//! renormalizable maps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cocycle::{self, CocycleError};
use crate::combinatorics::{is_k_bounded, KBound, Permutation, RauzyStep, Sequence};
use crate::exact::{self, Q};
use crate::giem::{self, Giem, GiemError, RenormState};

#[derive(Debug, Error)]
pub enum AffineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("image lengths sum to {sum}, not 1")]
    Tiling { sum: f64 },
    #[error("projective images stop contracting near depth {depth} (diameters {diameters:?})")]
    NoContraction { depth: usize, diameters: Vec<f64> },
    #[error("sequence of length {have} too short; nested images still {gap:e} apart")]
    TooShort { have: usize, gap: f64 },
    #[error("mean nonlinearity {0:e} is not zero")]
    Nonlinearity(f64),
    #[error("slope estimates are not Cauchy: increments {0:?}")]
    NotCauchy(Vec<f64>),
    #[error("break at 0 does not depend on t")]
    DegenerateBreak,
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Giem(#[from] GiemError),
}

pub type Result<T> = std::result::Result<T, AffineError>;

/// `x -> exp(omega_a) x + delta_a` on `I_a`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineIem {
    pub pi: Permutation,
    pub lengths: Vec<f64>,
    pub slopes: Vec<f64>,
    #[serde(skip_deserializing, default)]
    pub translations: Vec<f64>,
}

impl AffineIem {
    pub fn d(&self) -> usize {
        self.pi.d()
    }

    pub fn image_lengths(&self) -> Vec<f64> {
        self.lengths.iter().zip(&self.slopes).map(|(l, w)| l * w.exp()).collect()
    }

    pub fn to_giem(&self, prec: u32) -> Result<Giem> {
        Ok(Giem::affine(self.pi.clone(), &self.lengths, &self.slopes, prec)?)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = self.letter_at(x);
        self.slopes[a].exp() * x + self.translations[a]
    }

    /// Letter whose interval contains `x`.
    pub fn letter_at(&self, x: f64) -> usize {
        let mut acc = 0.0;
        let order = self.pi.order(0);
        for &b in &order {
            acc += self.lengths[b];
            if x < acc {
                return b;
            }
        }
        *order.last().unwrap()
    }
}

const TILING_TOL: f64 = 1e-10;

/// Builds the affine map with the given lengths and log-slopes.
///
/// With `rescale`, a tiling defect `s = Σ exp(omega) lambda ≠ 1` is removed by
/// shifting every slope by `-ln s`.
pub fn build_affine(pi: Permutation, lengths: &[f64], slopes: &[f64], rescale: bool) -> Result<AffineIem> {
    let d = pi.d();
    if lengths.len() != d || slopes.len() != d {
        return Err(AffineError::Invalid("one length and one slope per letter".into()));
    }
    if lengths.iter().any(|&x| !(x > 0.0)) || slopes.iter().any(|w| !w.is_finite()) {
        return Err(AffineError::Invalid("lengths must be positive and slopes finite".into()));
    }
    let total: f64 = lengths.iter().sum();
    if (total - 1.0).abs() > TILING_TOL {
        return Err(AffineError::Invalid(format!("lengths sum to {total}")));
    }
    let lengths: Vec<f64> = lengths.iter().map(|x| x / total).collect();
    let mut slopes = slopes.to_vec();
    let sum: f64 = lengths.iter().zip(&slopes).map(|(l, w)| l * w.exp()).sum();
    if (sum - 1.0).abs() > TILING_TOL {
        if !rescale {
            return Err(AffineError::Tiling { sum });
        }
        let shift = sum.ln();
        slopes.iter_mut().for_each(|w| *w -= shift);
    }
    let mut g = AffineIem {
        pi,
        lengths,
        slopes,
        translations: Vec::new(),
    };
    g.translations = translations(&g);
    Ok(g)
}

fn translations(g: &AffineIem) -> Vec<f64> {
    let d = g.d();
    let img = g.image_lengths();
    let s: f64 = img.iter().sum();
    let mut dom_left = vec![0.0; d];
    let mut acc = 0.0;
    for a in g.pi.order(0) {
        dom_left[a] = acc;
        acc += g.lengths[a];
    }
    let mut out = vec![0.0; d];
    let mut acc = 0.0;
    for a in g.pi.order(1) {
        out[a] = acc - g.slopes[a].exp() * dom_left[a];
        acc += img[a] / s;
    }
    out
}

/// `omega'`: the loser's slope becomes winner + loser.
pub fn slope_update(omega: &[f64], step: &RauzyStep) -> Vec<f64> {
    let mut out = omega.to_vec();
    out[step.loser] += omega[step.winner];
    out
}

/// Hilbert projective metric on the positive cone.
pub fn d_p(lam: &[f64], gam: &[f64]) -> Result<f64> {
    if lam.len() != gam.len() || lam.iter().chain(gam).any(|&x| !(x > 0.0)) {
        return Err(AffineError::Invalid("d_p needs two positive vectors of equal length".into()));
    }
    let r: Vec<f64> = lam.iter().zip(gam).map(|(a, b)| (a / b).ln()).collect();
    let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(hi - lo)
}

/// One length-update matrix of Rauzy–Veech induction with slope weights.
#[derive(Clone, Debug, Serialize)]
pub struct TransferMatrix {
    pub eps: u8,
    pub winner: usize,
    pub loser: usize,
    /// Slope (or mean log-derivative) of the letter last in the bottom row.
    pub slope_entry: f64,
    pub m: Vec<Vec<f64>>,
}

impl TransferMatrix {
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.m.iter().map(|r| r.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
    }
}

/// `T_n` for one step: maps level-(n+1) lengths to level-n lengths.
pub fn t_matrix(step: &RauzyStep, slope_entry: f64) -> TransferMatrix {
    let d = step.pi.d();
    let e = step.eps as f64;
    let a_eps = step.pi.last(step.eps);
    let a_other = step.pi.last(1 - step.eps);
    let mut m = vec![vec![0.0; d]; d];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m[a_other][a_other] = (e * slope_entry).exp();
    m[a_eps][a_other] = ((1.0 - e) * slope_entry).exp();
    TransferMatrix {
        eps: step.eps,
        winner: step.winner,
        loser: step.loser,
        slope_entry,
        m,
    }
}

/// `T ζ / |T ζ|_1`.
pub fn t_nor(t: &TransferMatrix, zeta: &[f64]) -> Vec<f64> {
    let v = t.apply(zeta);
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Exact slope orbit `omega^n = Theta_{n-1} ... Theta_0 omega` for n = 0..=len.
pub fn slopes_along(seq: &Sequence, omega: &[f64]) -> Vec<Vec<f64>> {
    let mut w: Vec<Q> = omega.iter().map(|&x| exact::from_f64(x)).collect();
    let mut out = vec![omega.to_vec()];
    for step in &seq.steps {
        let win = w[step.winner].clone();
        w[step.loser] += win;
        out.push(exact::vec_to_f64(&w));
    }
    out
}

/// Removes the unstable component of a slope vector at level 0.
///
/// Affine models only exist for slopes in `E^c ⊕ E^s`; rounding otherwise leaves a
/// component that the cocycle amplifies.
pub fn drop_unstable(seq: &Sequence, omega: &[f64], lookahead: usize) -> Result<Vec<f64>> {
    let split = cocycle::spectral_split(seq, 0, lookahead)?;
    let c = cocycle::split_vector(omega, &split)?;
    Ok(omega.iter().zip(&c.unstable).map(|(w, u)| w - u).collect())
}

/// Slope orbit with the unstable component removed again at every level that has
/// `lookahead` steps after it. Rounding leaves a component along `E^u` that the cocycle
/// would otherwise amplify until the model lengths stop converging.
pub fn central_slopes_along(seq: &Sequence, omega: &[f64], lookahead: usize) -> Result<Vec<Vec<f64>>> {
    let mut w = drop_unstable(seq, omega, lookahead)?;
    let mut out = vec![w.clone()];
    for (n, step) in seq.steps.iter().enumerate() {
        w[step.loser] += w[step.winner];
        if n + 1 + lookahead <= seq.len() {
            let split = cocycle::spectral_split(seq, n + 1, lookahead)?;
            let c = cocycle::split_vector(&w, &split)?;
            w = w.iter().zip(&c.unstable).map(|(a, u)| a - u).collect();
        }
        out.push(w.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelTraceRow {
    pub depth: usize,
    pub d_p_gap: f64,
    pub kappa_window: f64,
    pub residual_normalization: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelLengths {
    pub zeta: Vec<f64>,
    pub depth: usize,
    pub window: usize,
    /// Fitted contraction factor per window.
    pub kappa: f64,
    pub trace: Vec<ModelTraceRow>,
}

pub const MODEL_TOL: f64 = 1e-12;

/// Once converged, refinement continues while the images shrink and are wider than this.
const ZETA_FLOOR: f64 = 1e-16;

fn push_back(seq: &Sequence, slopes: &[Vec<f64>], n: usize, z: &[f64]) -> Vec<f64> {
    let mut z = z.to_vec();
    for j in (0..n).rev() {
        let step = &seq.steps[j];
        let t = t_matrix(step, slopes[j][step.pi.last(1)]);
        z = t_nor(&t, &z);
    }
    z
}

fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(d_p(a, b).unwrap_or(f64::INFINITY));
        }
    }
    best
}

/// `ζ̃^0`: the point of `⋂_n T_0^n Δ` for the slope orbit `slopes` along `seq`.
///
/// Depths grow by `window` steps until successive results are within `MODEL_TOL` in d_p,
/// then on while the sequence lasts and the nested images keep shrinking.
pub fn affine_model_lengths(seq: &Sequence, slopes: &[Vec<f64>], window: usize) -> Result<ModelLengths> {
    let d = seq.d();
    if slopes.len() < seq.len() || window == 0 {
        return Err(AffineError::Invalid("one slope vector per level and a positive window".into()));
    }
    let bary = vec![1.0 / d as f64; d];
    let vertices: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut trace = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut diams: Vec<f64> = Vec::new();
    let mut converged: Option<(Vec<f64>, usize)> = None;
    let mut n = window;
    while n <= seq.len() {
        let z = push_back(seq, slopes, n, &bary);
        let imgs: Vec<Vec<f64>> = vertices.iter().map(|v| push_back(seq, slopes, n, v)).collect();
        let diam = diameter(&imgs);
        let gap = prev.as_ref().map_or(f64::INFINITY, |p| d_p(p, &z).unwrap_or(f64::INFINITY));
        let kappa = diams.last().map_or(f64::NAN, |&p| if p.is_finite() { diam / p } else { f64::NAN });
        let residual = (z.iter().zip(&slopes[0]).map(|(x, w)| x * w.exp()).sum::<f64>() - 1.0).abs();
        trace.push(ModelTraceRow {
            depth: n,
            d_p_gap: gap,
            kappa_window: kappa,
            residual_normalization: residual,
        });
        diams.push(diam);
        let k = diams.len();
        if k >= 4 && diams[k - 4].is_finite() && diams[k - 1] >= diams[k - 4] && diams[k - 1] > MODEL_TOL {
            return Err(AffineError::NoContraction { depth: n, diameters: diams });
        }
        let shrinking = k < 2 || diams[k - 1] < diams[k - 2];
        if converged.is_some() && (!shrinking || diam < ZETA_FLOOR) {
            break;
        }
        if gap < MODEL_TOL && diam < 1e3 * MODEL_TOL {
            converged = Some((z.clone(), n));
        }
        prev = Some(z);
        n += window;
    }
    if let Some((zeta, depth)) = converged {
        let kappas: Vec<f64> = trace.iter().map(|r| r.kappa_window).filter(|k| k.is_finite() && *k > 0.0).collect();
        let kappa = if kappas.is_empty() {
            f64::NAN
        } else {
            (kappas.iter().map(|k| k.ln()).sum::<f64>() / kappas.len() as f64).exp()
        };
        return Ok(ModelLengths {
            zeta,
            depth,
            window,
            kappa,
            trace,
        });
    }
    Err(AffineError::TooShort {
        have: seq.len(),
        gap: trace.last().map_or(f64::INFINITY, |r| r.d_p_gap),
    })
}

/// `|Σ exp(omega_i) zeta_i - 1|`.
pub fn normalization_check(omega: &[f64], zeta: &[f64]) -> f64 {
    (omega.iter().zip(zeta).map(|(w, z)| w.exp() * z).sum::<f64>() - 1.0).abs()
}

/// Window length `k(2d-3)` for the smallest `k ≤ 64` the sequence is k-bounded for.
pub fn contraction_window(seq: &Sequence) -> usize {
    let d = seq.d();
    let k = (1..=64)
        .find(|&k| matches!(is_k_bounded(seq, k), KBound::Yes))
        .unwrap_or(8);
    (k * (2 * d).saturating_sub(3)).max(1)
}

#[derive(Clone, Debug)]
pub struct ExtractOptions {
    /// Deepest level whose mean log-derivative is pulled back.
    pub depth: usize,
    /// First level used.
    pub from: usize,
    /// Steps looked ahead when splitting at a level.
    pub lookahead: usize,
    pub nodes: usize,
    pub nonlinearity_tol: f64,
    /// Largest accepted final increment.
    pub cauchy_tol: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            depth: 40,
            from: 2,
            lookahead: 30,
            nodes: 32,
            nonlinearity_tol: 1e-10,
            cauchy_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeExtraction {
    pub omega: Vec<f64>,
    /// `(n, ω̃_n)`.
    pub estimates: Vec<(usize, Vec<f64>)>,
    /// `(n, |ω̃_{n+1} - ω̃_n|)`.
    pub increments: Vec<(usize, f64)>,
    /// `(n, |ω^n - L^n|)`.
    pub residuals: Vec<(usize, f64)>,
    pub k_bounded: Option<usize>,
    pub mean_nonlinearity: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Slope vector of the affine model: pulled-back central parts of `L^n`.
///
/// `states` must reach level `depth + lookahead`.
pub fn extract_slope_vector(states: &[RenormState], opts: &ExtractOptions) -> Result<SlopeExtraction> {
    let f = &states[0].base;
    let seq = &states.last().unwrap().seq;
    let need = opts.depth + opts.lookahead;
    if seq.len() < need {
        return Err(AffineError::Invalid(format!("need {need} renormalization steps, have {}", seq.len())));
    }
    if cocycle::genus(f.pi()) != 1 {
        return Err(CocycleError::Genus(cocycle::genus(f.pi())).into());
    }
    let nl = giem::mean_nonlinearity(f);
    if nl.abs() > opts.nonlinearity_tol {
        return Err(AffineError::Nonlinearity(nl));
    }
    let d = f.d();
    let k_bounded = (1..=64).find(|&k| matches!(is_k_bounded(seq, k), KBound::Yes));
    let closure = cocycle::return_closure(seq, opts.depth.max(opts.lookahead));
    let mut estimates = Vec::new();
    let mut ls = Vec::new();
    for n in opts.from..=opts.depth {
        let l = giem::mean_log_derivative(&states[n], opts.nodes)?;
        let omega_n = if d == 2 {
            vec![0.0; d]
        } else {
            let split = cocycle::spectral_split_closed(seq, n, opts.lookahead, closure)?;
            let c = cocycle::split_vector(&l, &split)?;
            let central: Vec<Q> = c.central.iter().map(|&x| exact::from_f64(x)).collect();
            let inv = cocycle::cocycle_product(seq, 0, n)
                .inverse_q()
                .ok_or(CocycleError::Singular)?;
            exact::vec_to_f64(&exact::mat_vec(&inv, &central))
        };
        ls.push((n, l));
        estimates.push((n, omega_n));
    }
    let increments: Vec<(usize, f64)> = estimates
        .windows(2)
        .map(|w| {
            let diff: Vec<f64> = w[1].1.iter().zip(&w[0].1).map(|(a, b)| a - b).collect();
            (w[0].0, sup(&diff))
        })
        .collect();
    let omega = estimates.last().unwrap().1.clone();
    if increments.last().is_some_and(|&(_, x)| x > opts.cauchy_tol) {
        return Err(AffineError::NotCauchy(increments.iter().map(|x| x.1).collect()));
    }
    let along = slopes_along(seq, &omega);
    let residuals = ls
        .iter()
        .map(|(n, l)| {
            let diff: Vec<f64> = along[*n].iter().zip(l).map(|(a, b)| a - b).collect();
            (*n, sup(&diff))
        })
        .collect();
    Ok(SlopeExtraction {
        omega,
        estimates,
        increments,
        residuals,
        k_bounded,
        mean_nonlinearity: nl,
    })
}

/// The unique affine map with combinatorics `seq` and slope vector `omega` (projected
/// onto `E^c ⊕ E^s`), with its model-construction data.
pub fn affine_model(seq: &Sequence, omega: &[f64], lookahead: usize) -> Result<(AffineIem, ModelLengths)> {
    let along = if seq.d() > 2 {
        central_slopes_along(seq, omega, lookahead)?
    } else {
        slopes_along(seq, omega)
    };
    let omega = along[0].clone();
    let ml = affine_model_lengths(seq, &along, contraction_window(seq))?;
    let g = build_affine(seq.start.clone(), &ml.zeta, &omega, true)?;
    Ok((g, ml))
}

/// Weak model `g_t` with slopes `omega + t v`.
pub fn weak_model_family(seq: &Sequence, omega: &[f64], v_stable: &[f64], t: f64, lookahead: usize) -> Result<AffineIem> {
    if v_stable.iter().all(|x| *x == 0.0) {
        return Err(AffineError::Invalid("stable vector is zero".into()));
    }
    let w: Vec<f64> = omega.iter().zip(v_stable).map(|(a, b)| a + t * b).collect();
    Ok(affine_model(seq, &w, lookahead)?.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongModel {
    pub model: AffineIem,
    pub t0: f64,
    pub v_stable: Vec<f64>,
    /// Target `ln BP_f(0)` and the model's value.
    pub target_log_break: f64,
    pub model_log_break: f64,
}

/// Log-break at 0 of an affine map.
fn log_break_at_zero(g: &Giem) -> f64 {
    giem::boundary_log_break(g, g.pi().order(0)[0]).to_f64()
}

/// The weak model whose break at 0 equals that of `f`.
pub fn strong_model(states: &[RenormState], omega: &[f64], lookahead: usize) -> Result<StrongModel> {
    let f = &states[0].base;
    let seq = &states.last().unwrap().seq;
    let v = cocycle::stable_space(seq, 0, lookahead)?.direction;
    let target = log_break_at_zero(f);
    let prec = f.prec();
    let (t1, t2) = (0.0, 0.1);
    let b1 = log_break_at_zero(&weak_model_family(seq, omega, &v, t1, lookahead)?.to_giem(prec)?);
    let b2 = log_break_at_zero(&weak_model_family(seq, omega, &v, t2, lookahead)?.to_giem(prec)?);
    if (b2 - b1).abs() < 1e-12 {
        return Err(AffineError::DegenerateBreak);
    }
    let t0 = t1 + (target - b1) * (t2 - t1) / (b2 - b1);
    let model = weak_model_family(seq, omega, &v, t0, lookahead)?;
    let model_log_break = log_break_at_zero(&model.to_giem(prec)?);
    Ok(StrongModel {
        model,
        t0,
        v_stable: v,
        target_log_break: target,
        model_log_break,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Masses {
    pub m: Vec<f64>,
    /// Largest difference between the two half-orbit estimates.
    pub gap: f64,
}

/// Visit frequencies of the orbit of `x0` to each interval.
pub fn invariant_masses(g: &AffineIem, orbit_length: usize, x0: f64) -> Masses {
    let d = g.d();
    let half = orbit_length / 2;
    let mut counts = [vec![0usize; d], vec![0usize; d]];
    let mut x = x0;
    for i in 0..orbit_length {
        let a = g.letter_at(x);
        counts[(i >= half) as usize][a] += 1;
        x = (g.slopes[a].exp() * x + g.translations[a]).clamp(0.0, 1.0 - f64::EPSILON);
    }
    let freq = |c: &[usize], n: usize| c.iter().map(|&k| k as f64 / n as f64).collect::<Vec<_>>();
    let a = freq(&counts[0], half.max(1));
    let b = freq(&counts[1], (orbit_length - half).max(1));
    let m: Vec<f64> = counts[0].iter().zip(&counts[1]).map(|(p, q)| (p + q) as f64 / orbit_length as f64).collect();
    let gap = a.iter().zip(&b).fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
    Masses { m, gap }
}

/// `Σ_a omega_a m_a`.
pub fn weighted_slope(omega: &[f64], m: &[f64]) -> f64 {
    omega.iter().zip(m).map(|(w, x)| w * x).sum()
}

/// The affine model of `f` with its extraction data.
#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub model: AffineIem,
    pub lengths: ModelLengths,
    pub extraction: SlopeExtraction,
    pub normalization_residual: f64,
}

/// Extracts the slope vector of `f` and builds its affine model.
pub fn model_of(f: &Arc<Giem>, opts: &ExtractOptions, model_depth: usize) -> Result<(ModelReport, Vec<RenormState>)> {
    let g = cocycle::genus(f.pi());
    if g != 1 {
        return Err(CocycleError::Genus(g).into());
    }
    let nl = giem::mean_nonlinearity(f);
    if nl.abs() > opts.nonlinearity_tol {
        return Err(AffineError::Nonlinearity(nl));
    }
    let steps = model_depth.max(opts.depth + opts.lookahead);
    let states = giem::renormalize(f, steps)?;
    let ex = extract_slope_vector(&states[..=opts.depth + opts.lookahead], opts)?;
    let seq = &states.last().unwrap().seq;
    let (model, lengths) = affine_model(seq, &ex.omega, opts.lookahead)?;
    let normalization_residual = normalization_check(&model.slopes, &lengths.zeta);
    Ok((
        ModelReport {
            model,
            lengths,
            extraction: ex,
            normalization_residual,
        },
        states,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::rauzy_move;

    fn pi3() -> Permutation {
        Permutation::from_rows("ABC", "CBA").unwrap()
    }

    #[test]
    fn stencil_example() {
        let step = rauzy_move(&pi3(), 0).unwrap();
        assert_eq!((step.pi.name(step.winner), step.pi.name(step.loser)), ("C", "A"));
        assert_eq!(slope_update(&[0.1, -0.2, 0.1], &step), vec![0.2, -0.2, 0.1]);
        let th = cocycle::theta_matrix(&step);
        let w = [0.3, -0.7, 1.1];
        let via = th.to_f64() * nalgebra::DVector::from_row_slice(&w);
        let su = slope_update(&w, &step);
        for i in 0..3 {
            assert_eq!(via[i], su[i]);
        }
    }

    #[test]
    fn hilbert_metric_values() {
        assert!((d_p(&[2.0, 1.0], &[1.0, 2.0]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(d_p(&[1.0, 3.0, 2.0], &[2.0, 6.0, 4.0]).unwrap(), 0.0);
        assert!(d_p(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_slope_stencil_is_length_update() {
        for eps in 0..2 {
            let step = rauzy_move(&pi3(), eps).unwrap();
            let t = t_matrix(&step, 0.0);
            let th = cocycle::theta_matrix(&step).transpose();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(t.m[i][j], exact::to_f64(&exact::qi(th.get(i, j))));
                }
            }
        }
    }

    #[test]
    fn golden_lengths_from_zero_slopes() {
        let pi = Permutation::from_rows("AB", "BA").unwrap();
        let seq = Sequence::from_types(&pi, &[0, 1].repeat(40)).unwrap();
        let along = slopes_along(&seq, &[0.0, 0.0]);
        let ml = affine_model_lengths(&seq, &along, 2).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        // type 0 first means B is the longer interval
        let expect = [2.0 - phi, phi - 1.0];
        for i in 0..2 {
            assert!((ml.zeta[i] - expect[i]).abs() < 1e-12, "{:?}", ml.zeta);
        }
        assert!(normalization_check(&[0.0, 0.0], &ml.zeta) < 1e-15);
    }

    #[test]
    fn tiling_is_enforced() {
        let p = Permutation::from_rows("AB", "BA").unwrap();
        assert!(matches!(build_affine(p.clone(), &[0.5, 0.5], &[0.3, 0.3], false), Err(AffineError::Tiling { .. })));
        let g = build_affine(p, &[0.5, 0.5], &[0.3, 0.3], true).unwrap();
        assert!((g.image_lengths().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_masses_are_lengths() {
        let p = Permutation::from_rows("AB", "BA").unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let g = build_affine(p, &[phi - 1.0, 2.0 - phi], &[0.0, 0.0], false).unwrap();
        let m = invariant_masses(&g, 1_000_000, 0.5);
        assert!((m.m[0] - (phi - 1.0)).abs() < 1e-3 && m.gap < 1e-3);
    }
}
