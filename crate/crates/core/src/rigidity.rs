//! The conjugacy between two maps with the same combinatorics, the solution of the
//! cohomological equation along orbits, and the C¹ rigidity diagnostics.
//!
//! `h` is never a closed-form function here. It is known exactly at matched tower
//! endpoints, and elsewhere through enclosures obtained by descending the
//! renormalization levels.

use std::sync::Arc;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use serde::Serialize;
use thiserror::Error;

use crate::affine::{self, AffineError, AffineIem, ExtractOptions, ModelReport, StrongModel};
use crate::combinatorics::Letter;
use crate::fit::{fit, RateEstimate, RateModel};
use crate::giem::{self, Giem, GiemError, RenormState};

#[derive(Debug, Error)]
pub enum RigidityError {
    #[error("combinatorics differ at step {step}: {detail}")]
    Combinatorics { step: usize, detail: String },
    #[error("matched points out of order at level {level} near x = {x:e}")]
    Order { level: usize, x: f64 },
    #[error("orbit of x = {x:e} does not enter I^{level} within {bound} iterates")]
    Tower { level: usize, x: f64, bound: u128 },
    #[error("enclosure too wide: uncertainty {uncertainty:e} in ln Dg by level {level}; use a deeper table")]
    Enclosure { level: usize, uncertainty: f64 },
    #[error("per-letter ratios do not stabilize: spread {spread:e} at level {level}")]
    NonStabilizing { level: usize, spread: f64 },
    #[error("rate fit: {0}")]
    Fit(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Giem(#[from] GiemError),
    #[error(transparent)]
    Affine(#[from] AffineError),
}

pub type Result<T> = std::result::Result<T, RigidityError>;

/// Largest uncertainty in ψ caused by the width of the h-enclosures.
pub const PSI_TOL: f64 = 1e-8;

/// Renormalizations of `f` and `g` along one shared path.
#[derive(Clone)]
pub struct Pair {
    pub f: Vec<RenormState>,
    pub g: Vec<RenormState>,
}

impl Pair {
    /// Renormalizes both maps `depth` times, failing at the first step where the types
    /// or winners differ.
    pub fn new(f: &Arc<Giem>, g: &Arc<Giem>, depth: usize) -> Result<Pair> {
        if f.pi() != g.pi() {
            return Err(RigidityError::Combinatorics {
                step: 0,
                detail: format!("permutations {} and {}", f.pi(), g.pi()),
            });
        }
        let mut p = Pair {
            f: vec![RenormState::initial(f.clone())],
            g: vec![RenormState::initial(g.clone())],
        };
        p.extend(depth)?;
        Ok(p)
    }

    /// Renormalizes at least `depth` levels and then on until `|I^N| ≤ min_len`, so that
    /// the h-enclosures pulled back from level N are narrow. Stops at `max_depth`.
    pub fn until_length(f: &Arc<Giem>, g: &Arc<Giem>, depth: usize, min_len: f64, max_depth: usize) -> Result<Pair> {
        let mut p = Pair::new(f, g, depth)?;
        while p.depth() < max_depth && p.f.last().unwrap().length.to_f64() > min_len {
            p.extend(p.depth() + 1)?;
        }
        Ok(p)
    }

    fn extend(&mut self, depth: usize) -> Result<()> {
        for j in self.depth()..depth {
            let a = giem::rv_step(self.f.last().unwrap())?;
            let b = giem::rv_step(self.g.last().unwrap())?;
            let (sa, sb) = (&a.seq.steps[j], &b.seq.steps[j]);
            if sa.eps != sb.eps || sa.winner != sb.winner {
                return Err(RigidityError::Combinatorics {
                    step: j,
                    detail: format!(
                        "type {} winner {} against type {} winner {}",
                        sa.eps,
                        sa.pi.name(sa.winner),
                        sb.eps,
                        sb.pi.name(sb.winner)
                    ),
                });
            }
            self.f.push(a);
            self.g.push(b);
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.f.len() - 1
    }

    pub fn prec(&self) -> u32 {
        self.f[0].prec().max(self.g[0].prec())
    }
}

fn q_u128(s: &RenormState, a: Letter) -> Result<u128> {
    s.q[a]
        .to_u128()
        .ok_or_else(|| RigidityError::Invalid(format!("return time at level {} overflows", s.level)))
}

/// `i_n(x) = min{i ≥ 0 : f^i(x) ∈ I^n}` by iterating the base map.
pub fn entry_time(state: &RenormState, x: &Float) -> Result<u128> {
    let f = &state.base;
    let bound = (0..state.d()).map(|a| q_u128(state, a)).collect::<Result<Vec<_>>>()?.into_iter().max().unwrap_or(1);
    let mut y = x.clone();
    let mut i = 0u128;
    while y >= state.length {
        if i >= bound {
            return Err(RigidityError::Tower {
                level: state.level,
                x: x.to_f64(),
                bound,
            });
        }
        y = f.value_branch(f.letter_at(&y), &y);
        i += 1;
    }
    Ok(i)
}

/// The first-entry points `z_n = f^{i_n(x)}(x) ∈ I^n` for every level of `states`.
///
/// Since `I^{n+1}` is the first return domain of `R^n f`, `z_{n+1}` is either `z_n` or
/// its image under one branch of `R^n f`.
#[derive(Clone, Debug)]
pub struct Descent {
    pub z: Vec<Float>,
    pub entry: Vec<u128>,
    /// The branch of `R^n f` taken from `z_n`, if any.
    pub moves: Vec<Option<Letter>>,
}

pub fn descend(states: &[RenormState], x: &Float) -> Result<Descent> {
    if *x < 0 || *x >= 1 {
        return Err(RigidityError::Invalid(format!("point {} outside [0,1)", x.to_f64())));
    }
    let mut z = vec![x.clone()];
    let mut entry = vec![0u128];
    let mut moves = Vec::new();
    for w in states.windows(2) {
        let (s, next) = (&w[0], &w[1]);
        let cur = z.last().unwrap().clone();
        let i = *entry.last().unwrap();
        if cur < next.length {
            moves.push(None);
            z.push(cur);
            entry.push(i);
        } else {
            let b = s.letter_at(&cur);
            let y = s.value_letter(b, &cur)?;
            if y >= next.length {
                return Err(RigidityError::Tower {
                    level: next.level,
                    x: x.to_f64(),
                    bound: i + q_u128(s, b)?,
                });
            }
            moves.push(Some(b));
            z.push(y);
            entry.push(i + q_u128(s, b)?);
        }
    }
    Ok(Descent { z, entry, moves })
}

/// Enclosure `[lo, hi]` of `h` at a point, with a point estimate inside it.
#[derive(Clone, Debug)]
pub struct Enclosure {
    pub lo: Float,
    pub mid: Float,
    pub hi: Float,
}

impl Enclosure {
    pub fn width(&self) -> f64 {
        Float::with_val(self.lo.prec(), &self.hi - &self.lo).to_f64()
    }

    fn map(&self, mut op: impl FnMut(&Float) -> Result<Float>) -> Result<Enclosure> {
        Ok(Enclosure {
            lo: op(&self.lo)?,
            mid: op(&self.mid)?,
            hi: op(&self.hi)?,
        })
    }
}

/// Enclosures of `h(z_n)` for every level, from the matching `I^N_β ↦ Ĩ^N_β` at the
/// deepest level pulled back through inverse branches of `R^n g`.
///
/// The point estimate interpolates linearly inside `Ĩ^N_β`.
pub fn h_along(pair: &Pair, d: &Descent) -> Result<Vec<Enclosure>> {
    let n = pair.depth();
    let prec = pair.prec();
    let (sf, sg) = (&pair.f[n], &pair.g[n]);
    let b = sf.letter_at(&d.z[n]);
    let t = Float::with_val(prec, &d.z[n] - &sf.dom_lo[b]) / sf.dom_len(b);
    let mut cur = Enclosure {
        lo: sg.dom_lo[b].clone(),
        mid: Float::with_val(prec, t * sg.dom_len(b)) + &sg.dom_lo[b],
        hi: sg.dom_hi[b].clone(),
    };
    let mut out = vec![cur.clone()];
    for level in (0..n).rev() {
        if let Some(b) = d.moves[level] {
            let s = &pair.g[level];
            cur = cur.map(|y| {
                let x = s.inverse_letter(b, y)?;
                Ok(x.clamp(&s.dom_lo[b], &s.dom_hi[b]))
            })?;
        }
        out.push(cur.clone());
    }
    out.reverse();
    Ok(out)
}

/// `ψ_n(x) = ln Df^{i_n(x)}(x) - ln Dg^{i_n(x)}(h(x))` for `n ≤ depth`.
#[derive(Clone, Debug, Serialize)]
pub struct PsiSeries {
    pub x: f64,
    pub values: Vec<f64>,
    pub entry_times: Vec<u128>,
    /// `(n, |ψ_{n+1} - ψ_n|)`.
    pub increments: Vec<(usize, f64)>,
    /// Accumulated spread of the ψ terms over the h-enclosures.
    pub uncertainty: f64,
    /// Enclosure of `h(x)`.
    pub h: (f64, f64),
    pub h_estimate: f64,
}

pub fn psi_series(pair: &Pair, x: &Float, depth: usize) -> Result<PsiSeries> {
    if depth > pair.depth() {
        return Err(RigidityError::Invalid(format!("ψ depth {depth} beyond the pair depth {}", pair.depth())));
    }
    let d = descend(&pair.f, x)?;
    let hs = h_along(pair, &d)?;
    let mut psi = Float::new(pair.prec());
    let mut values = vec![0.0];
    let mut increments = Vec::new();
    let mut uncertainty = 0.0f64;
    for n in 0..depth {
        if let Some(b) = d.moves[n] {
            let (sf, sg) = (&pair.f[n], &pair.g[n]);
            let lf = sf.value_d1(b, &d.z[n])?.1.ln();
            let lg = |y: &Float| -> Result<Float> { Ok(sg.value_d1(b, y)?.1.ln()) };
            let mid = lg(&hs[n].mid)?;
            let spread = [lg(&hs[n].lo)?, lg(&hs[n].hi)?]
                .iter()
                .map(|v| Float::with_val(v.prec(), v - &mid).abs().to_f64())
                .fold(0.0, f64::max);
            uncertainty += spread;
            if uncertainty > PSI_TOL {
                return Err(RigidityError::Enclosure { level: n, uncertainty });
            }
            let term = lf - mid;
            increments.push((n, term.to_f64().abs()));
            psi += term;
        } else {
            increments.push((n, 0.0));
        }
        values.push(psi.to_f64());
    }
    Ok(PsiSeries {
        x: x.to_f64(),
        values,
        entry_times: d.entry[..=depth].to_vec(),
        increments,
        uncertainty,
        h: (hs[0].lo.to_f64(), hs[0].hi.to_f64()),
        h_estimate: hs[0].mid.to_f64(),
    })
}

/// Matched tower endpoints at one level, sorted by the `f` point.
#[derive(Clone, Debug)]
pub struct LevelMatch {
    pub level: usize,
    pub points: Vec<(Float, Float)>,
    /// Largest gap between consecutive `f` points.
    pub max_gap: f64,
}

/// `h` at the endpoints of all tower floors up to `depth`.
#[derive(Clone, Debug)]
pub struct ConjugacyTable {
    pub depth: usize,
    pub levels: Vec<LevelMatch>,
}

impl ConjugacyTable {
    pub fn deepest(&self) -> &LevelMatch {
        self.levels.last().unwrap()
    }

    /// Largest distance from a level-j point to the nearest level-(j+1) point.
    pub fn refinement_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.levels.windows(2) {
            for (x, _) in &w[0].points {
                let k = w[1].points.partition_point(|p| p.0 < *x);
                let near = [k.checked_sub(1), Some(k)]
                    .into_iter()
                    .flatten()
                    .filter_map(|i| w[1].points.get(i))
                    .map(|p| Float::with_val(x.prec(), &p.0 - x).abs().to_f64())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(near);
            }
        }
        worst
    }
}

/// Matches the tower floors of `R^j f` and `R^j g` for every `j ≤ depth`.
pub fn build_conjugacy(pair: &Pair, depth: usize) -> Result<ConjugacyTable> {
    if depth > pair.depth() {
        return Err(RigidityError::Invalid(format!("table depth {depth} beyond the pair depth {}", pair.depth())));
    }
    let prec = pair.prec();
    let tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32 / 2)));
    let mut levels = Vec::new();
    for j in 0..=depth {
        let (sf, sg) = (&pair.f[j], &pair.g[j]);
        let mut pts = vec![(Float::new(prec), Float::new(prec)), (Float::with_val(prec, 1), Float::with_val(prec, 1))];
        for a in 0..sf.d() {
            let (ff, fg) = (sf.floors(a)?, sg.floors(a)?);
            for ((xl, xr), (yl, yr)) in ff.into_iter().zip(fg) {
                pts.push((xl, yl));
                pts.push((xr, yr));
            }
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut points: Vec<(Float, Float)> = Vec::with_capacity(pts.len() / 2 + 2);
        for p in pts {
            if let Some(last) = points.last() {
                let dx = Float::with_val(prec, &p.0 - &last.0);
                if dx <= tol {
                    if Float::with_val(prec, &p.1 - &last.1).abs() > tol {
                        return Err(RigidityError::Order { level: j, x: p.0.to_f64() });
                    }
                    continue;
                }
                if p.1 <= last.1 {
                    return Err(RigidityError::Order { level: j, x: p.0.to_f64() });
                }
            }
            points.push(p);
        }
        let max_gap = points
            .windows(2)
            .map(|w| Float::with_val(prec, &w[1].0 - &w[0].0).to_f64())
            .fold(0.0, f64::max);
        levels.push(LevelMatch { level: j, points, max_gap });
    }
    Ok(ConjugacyTable { depth, levels })
}

/// The tightest matched pair around `x` at the deepest level: an enclosure of `h(x)`.
pub fn conjugacy_point(table: &ConjugacyTable, x: &Float) -> (Float, Float) {
    let pts = &table.deepest().points;
    let k = pts.partition_point(|p| p.0 <= *x);
    if k > 0 && pts[k - 1].0 == *x {
        return (pts[k - 1].1.clone(), pts[k - 1].1.clone());
    }
    let lo = pts[k.saturating_sub(1)].1.clone();
    let hi = pts[k.min(pts.len() - 1)].1.clone();
    (lo, hi)
}

/// Per-letter ratios `|R^n g(Ĩ^n_β)| / |R^n f(I^n_β)|` and their common limit.
#[derive(Clone, Debug, Serialize)]
pub struct C8Estimate {
    pub c8: f64,
    /// Relative spread of the ratios at the deepest level.
    pub spread: f64,
    /// `(n, ratios, spread)`.
    pub levels: Vec<(usize, Vec<f64>, f64)>,
}

pub fn c8_estimate(pair: &Pair, depth: usize, spread_tol: f64) -> Result<C8Estimate> {
    if depth > pair.depth() {
        return Err(RigidityError::Invalid(format!("depth {depth} beyond the pair depth {}", pair.depth())));
    }
    let prec = pair.prec();
    let mut levels = Vec::new();
    for n in 0..=depth {
        let (sf, sg) = (&pair.f[n], &pair.g[n]);
        let ratios: Vec<f64> = (0..sf.d())
            .map(|a| Float::with_val(prec, sg.img_len(a) / sf.img_len(a)).to_f64())
            .collect();
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        levels.push((n, ratios, (hi - lo) / mean));
    }
    let (_, last, spread) = levels.last().unwrap().clone();
    if !(spread <= spread_tol) {
        return Err(RigidityError::NonStabilizing { level: depth, spread });
    }
    Ok(C8Estimate {
        c8: last.iter().sum::<f64>() / last.len() as f64,
        spread,
        levels,
    })
}

/// Uniform points of (0,1) from a fixed seed, kept away from the matched points of the
/// table (which lie on finite orbits of the partition points).
pub fn sample_points(table: &ConjugacyTable, count: usize, seed: u64, prec: u32) -> Vec<Float> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = &table.deepest().points;
    let margin = 1e-9;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: f64 = rng.gen_range(0.0..1.0);
        let xf = Float::with_val(prec, x);
        let k = pts.partition_point(|p| p.0 <= xf);
        let near = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|i| pts.get(i))
            .map(|p| (p.0.to_f64() - x).abs())
            .fold(f64::INFINITY, f64::min);
        if near > margin {
            out.push(xf);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DhSample {
    pub x: f64,
    /// Secant slope of h between the matched points around x.
    pub fd_slope: f64,
    pub psi: f64,
    /// `C₈ e^{ψ(x)}`.
    pub predicted: f64,
    pub rel_dev: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DhReport {
    pub c8: f64,
    pub psi_depth: usize,
    pub samples: Vec<DhSample>,
    pub max_rel_dev: f64,
    /// Largest secant slope over consecutive matched points.
    pub lipschitz: f64,
    /// Smallest secant slope over consecutive matched points.
    pub min_slope: f64,
}

/// Compares secant slopes of the matched table against `C₈ e^{ψ}`.
pub fn dh_check(pair: &Pair, table: &ConjugacyTable, samples: &[Float], c8: f64, psi_depth: usize) -> Result<DhReport> {
    let prec = pair.prec();
    let pts = &table.deepest().points;
    let slope = |i: usize| {
        let dx = Float::with_val(prec, &pts[i + 1].0 - &pts[i].0);
        (Float::with_val(prec, &pts[i + 1].1 - &pts[i].1) / dx).to_f64()
    };
    let all: Vec<f64> = (0..pts.len() - 1).map(slope).collect();
    let lipschitz = all.iter().cloned().fold(0.0, f64::max);
    let min_slope = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for x in samples {
        let k = pts.partition_point(|p| p.0 <= *x);
        if k == 0 || k >= pts.len() {
            return Err(RigidityError::Invalid(format!("sample {} outside the table", x.to_f64())));
        }
        let fd = all[k - 1];
        let ps = psi_series(pair, x, psi_depth)?;
        let psi = *ps.values.last().unwrap();
        let predicted = c8 * psi.exp();
        out.push(DhSample {
            x: x.to_f64(),
            fd_slope: fd,
            psi,
            predicted,
            rel_dev: (fd - predicted).abs() / predicted,
        });
    }
    let max_rel_dev = out.iter().map(|s| s.rel_dev).fold(0.0, f64::max);
    Ok(DhReport {
        c8,
        psi_depth,
        samples: out,
        max_rel_dev,
        lipschitz,
        min_slope,
    })
}

/// Both decay models fitted to one series.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub sqrt: RateEstimate,
    pub exponential: RateEstimate,
}

/// Fits `C λ^√n` and `C λ^n` to a positive series of at least six points.
pub fn rate_fit(series: &[(usize, f64)]) -> Result<RateFit> {
    if series.len() < 6 {
        return Err(RigidityError::Fit(format!("{} points; at least 6 are needed", series.len())));
    }
    if let Some((n, v)) = series.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(RigidityError::Fit(format!("non-positive value {v:e} at n = {n}")));
    }
    let s = fit(series, RateModel::SqrtExponential).ok_or_else(|| RigidityError::Fit("degenerate series".into()))?;
    let e = fit(series, RateModel::Exponential).ok_or_else(|| RigidityError::Fit("degenerate series".into()))?;
    Ok(RateFit { sqrt: s, exponential: e })
}

/// `(n, max oscillation of ln D R^n f over one branch)`, the distortion of the towers.
pub fn distortion_series(states: &[RenormState], grid: usize) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for s in states {
        let prec = s.prec();
        let mut worst = 0.0f64;
        for a in 0..s.d() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..=grid {
                let x = Float::with_val(prec, s.dom_len(a) * k as u32) / grid as u32 + &s.dom_lo[a];
                let v = s.value_d1(a, &x)?.1.ln().to_f64();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            worst = worst.max(hi - lo);
        }
        out.push((s.level, worst));
    }
    Ok(out)
}

/// The success or structured failure of one check.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Failed(String),
}

impl<T> Outcome<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(t) => Some(t),
            Outcome::Failed(_) => None,
        }
    }
}

impl<T, E: std::fmt::Display> From<std::result::Result<T, E>> for Outcome<T> {
    fn from(r: std::result::Result<T, E>) -> Self {
        match r {
            Ok(t) => Outcome::Ok(t),
            Err(e) => Outcome::Failed(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Hypotheses {
    pub mean_nonlinearity_f: f64,
    pub mean_nonlinearity_g: Option<f64>,
    /// `ln BP` at 0 of f and g.
    pub log_break_f: f64,
    pub log_break_g: Option<f64>,
    pub same_combinatorics: Option<Outcome<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceSeries {
    pub series: Vec<(usize, f64)>,
    /// Fit over `n ≥ fit_from`.
    pub fit: Outcome<RateFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremOne {
    pub model: AffineIem,
    pub normalization_residual: f64,
    /// Steps through which f and its model share types and winners.
    pub agree_through: usize,
    pub first_divergence: Option<usize>,
    pub distance: DistanceSeries,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelComparison {
    pub weak_lengths_gap: f64,
    pub weak_slopes_gap: f64,
    pub strong_lengths_gap: Option<f64>,
    pub strong_slopes_gap: Option<f64>,
    pub strong_f: Option<Outcome<StrongModel>>,
    pub strong_g: Option<Outcome<StrongModel>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub depth: usize,
    pub hypotheses: Hypotheses,
    pub t1: Outcome<TheoremOne>,
    pub t2: Option<Outcome<ModelComparison>>,
    pub t3: Option<Outcome<DistanceSeries>>,
}

#[derive(Clone, Debug)]
pub struct TheoremOptions {
    pub depth: usize,
    pub extract: ExtractOptions,
    /// Levels of combinatorics used to build models.
    pub model_depth: usize,
    pub fit_from: usize,
    /// Also build the strong models.
    pub linearize: bool,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        TheoremOptions {
            depth: 35,
            extract: ExtractOptions::default(),
            model_depth: 150,
            fit_from: 5,
            linearize: false,
        }
    }
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `d_{C²}(R^n f, R^n g)` for `n ≤ depth` along a shared path.
pub fn distance_series(pair: &Pair, depth: usize, fit_from: usize) -> Result<DistanceSeries> {
    let series = (0..=depth.min(pair.depth()))
        .map(|n| Ok((n, giem::c2_distance(&pair.f[n], &pair.g[n])?.total)))
        .collect::<Result<Vec<_>>>()?;
    let tail: Vec<(usize, f64)> = series.iter().cloned().filter(|(n, _)| *n >= fit_from).collect();
    Ok(DistanceSeries {
        fit: rate_fit(&tail).into(),
        series,
    })
}

/// The affine model of `f` with its extraction data, the renormalizations of `f`, and
/// the comparison of `f` with its model.
pub struct ModelRun {
    pub report: ModelReport,
    pub states: Vec<RenormState>,
    pub t1: TheoremOne,
}

pub fn theorem_one(f: &Arc<Giem>, opts: &TheoremOptions) -> Result<ModelRun> {
    let (report, states) = affine::model_of(f, &opts.extract, opts.model_depth)?;
    let rep = &report;
    let fa = Arc::new(rep.model.to_giem(f.prec())?);
    let depth = opts.depth.min(states.len() - 1);
    let model_states = giem::renormalize(&fa, depth)?;
    let mut agree_through = depth;
    let mut first_divergence = None;
    for j in 0..depth {
        let (a, b) = (&states[depth].seq.steps[j], &model_states[depth].seq.steps[j]);
        if a.eps != b.eps || a.winner != b.winner {
            agree_through = j;
            first_divergence = Some(j);
            break;
        }
    }
    let series = (0..=agree_through)
        .map(|n| Ok((n, giem::c2_distance(&states[n], &model_states[n])?.total)))
        .collect::<Result<Vec<_>>>()?;
    let tail: Vec<(usize, f64)> = series.iter().cloned().filter(|(n, _)| *n >= opts.fit_from).collect();
    let t1 = TheoremOne {
        model: rep.model.clone(),
        normalization_residual: rep.normalization_residual,
        agree_through,
        first_divergence,
        distance: DistanceSeries {
            fit: rate_fit(&tail).into(),
            series,
        },
    };
    Ok(ModelRun { report, states, t1 })
}

fn compare_models(f: &ModelRun, g: &ModelRun, opts: &TheoremOptions) -> ModelComparison {
    let (mf, mg) = (&f.t1.model, &g.t1.model);
    let mut out = ModelComparison {
        weak_lengths_gap: sup_gap(&mf.lengths, &mg.lengths),
        weak_slopes_gap: sup_gap(&mf.slopes, &mg.slopes),
        strong_lengths_gap: None,
        strong_slopes_gap: None,
        strong_f: None,
        strong_g: None,
    };
    if opts.linearize {
        let strong = |r: &ModelRun| affine::strong_model(&r.states, &r.t1.model.slopes, opts.extract.lookahead);
        let (sf, sg) = (strong(f), strong(g));
        if let (Ok(a), Ok(b)) = (&sf, &sg) {
            out.strong_lengths_gap = Some(sup_gap(&a.model.lengths, &b.model.lengths));
            out.strong_slopes_gap = Some(sup_gap(&a.model.slopes, &b.model.slopes));
        }
        out.strong_f = Some(sf.into());
        out.strong_g = Some(sg.into());
    }
    out
}

/// Theorem 1 for `f`, and with `g` the model comparison and the distance decay.
pub fn theorem_checks(f: &Arc<Giem>, g: Option<&Arc<Giem>>, opts: &TheoremOptions) -> TheoremReport {
    let lb = |m: &Giem| giem::boundary_log_break(m, m.pi().order(0)[0]).to_f64();
    let pair = g.map(|g| Pair::new(f, g, opts.depth));
    let hypotheses = Hypotheses {
        mean_nonlinearity_f: giem::mean_nonlinearity(f),
        mean_nonlinearity_g: g.map(|g| giem::mean_nonlinearity(g)),
        log_break_f: lb(f),
        log_break_g: g.map(|g| lb(g)),
        same_combinatorics: pair.as_ref().map(|p| match p {
            Ok(p) => Outcome::Ok(p.depth()),
            Err(e) => Outcome::Failed(e.to_string()),
        }),
    };
    let one_f = theorem_one(f, opts);
    let t2 = g.map(|g| -> Outcome<ModelComparison> {
        let one_g = theorem_one(g, opts);
        match (&one_f, one_g) {
            (Ok(a), Ok(b)) => Outcome::Ok(compare_models(a, &b, opts)),
            (Err(e), _) => Outcome::Failed(format!("model of f: {e}")),
            (_, Err(e)) => Outcome::Failed(format!("model of g: {e}")),
        }
    });
    let t3 = pair.map(|p| p.and_then(|p| distance_series(&p, opts.depth, opts.fit_from)).into());
    TheoremReport {
        depth: opts.depth,
        hypotheses,
        t1: one_f.map(|x| x.t1).into(),
        t2,
        t3,
    }
}
