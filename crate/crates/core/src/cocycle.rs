//! The Rauzy–Veech cocycle, the antisymmetric matrix Omega, invariant cones and
//! the central/stable/unstable splitting along a sequence.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::combinatorics::{close_path, CombinatoricsError, Permutation, RauzyStep, Sequence};
use crate::exact::{self, Q};
use crate::fit::{fit, RateEstimate, RateModel};

#[derive(Debug, Error)]
pub enum CocycleError {
    #[error("intertwining fails at step {step}: entry ({row}, {col})")]
    Intertwine { step: usize, row: usize, col: usize },
    #[error("genus {0} combinatorics; only genus one is supported")]
    Genus(usize),
    #[error("kernel of Omega has no basis with entries in {{-1, 0, 1}}")]
    NoSmallKernelBasis,
    #[error("sequence is not a loop: it ends away from its start")]
    NotALoop,
    #[error("Theta - I is singular on the image of Omega")]
    Singular,
    #[error("splitting is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("sequence too short: need {need} steps, have {have}")]
    TooShort { need: usize, have: usize },
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
}

type Result<T> = std::result::Result<T, CocycleError>;

/// Square matrix of arbitrary-precision integers, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    d: usize,
    a: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zero(d: usize) -> Self {
        IntMatrix { d, a: vec![BigInt::zero(); d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zero(d);
        for i in 0..d {
            m.a[i * d + i] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let d = rows.len();
        let a = rows.iter().flat_map(|r| r.iter().map(|&x| BigInt::from(x))).collect();
        IntMatrix { d, a }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.a[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.a[i * self.d + j] = v;
    }

    pub fn mul(&self, o: &IntMatrix) -> IntMatrix {
        let d = self.d;
        let mut out = Self::zero(d);
        for i in 0..d {
            for k in 0..d {
                let x = self.get(i, k);
                if x.is_zero() {
                    continue;
                }
                for j in 0..d {
                    out.a[i * d + j] += x * o.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> IntMatrix {
        let d = self.d;
        let mut out = Self::zero(d);
        for i in 0..d {
            for j in 0..d {
                out.a[j * d + i] = self.get(i, j).clone();
            }
        }
        out
    }

    pub fn apply(&self, v: &[BigInt]) -> Vec<BigInt> {
        (0..self.d)
            .map(|i| (0..self.d).fold(BigInt::zero(), |acc, j| acc + self.get(i, j) * &v[j]))
            .collect()
    }

    pub fn apply_q(&self, v: &[Q]) -> Vec<Q> {
        exact::mat_vec(&self.to_q(), v)
    }

    pub fn to_q(&self) -> Vec<Vec<Q>> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| exact::qi(self.get(i, j))).collect())
            .collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| exact::to_f64(&exact::qi(self.get(i, j))))
    }

    /// Exact inverse, if the matrix is invertible over the rationals.
    pub fn inverse_q(&self) -> Option<Vec<Vec<Q>>> {
        exact::inverse(&self.to_q())
    }

    pub fn rows_as_strings(&self) -> Vec<Vec<String>> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.get(i, j).to_string()).collect())
            .collect()
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows_as_strings())
    }
}

impl Serialize for IntMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows_as_strings().serialize(s)
    }
}

/// Omega_{ab} = +1 if a is after b in row 1 and before b in row 0, -1 in the reverse case.
pub fn omega_matrix(pi: &Permutation) -> IntMatrix {
    let d = pi.d();
    let mut m = IntMatrix::zero(d);
    for a in 0..d {
        for b in 0..d {
            let v = if pi.pos(1, a) > pi.pos(1, b) && pi.pos(0, a) < pi.pos(0, b) {
                1
            } else if pi.pos(1, a) < pi.pos(1, b) && pi.pos(0, a) > pi.pos(0, b) {
                -1
            } else {
                0
            };
            m.set(a, b, BigInt::from(v));
        }
    }
    m
}

/// Theta = I + E_{loser, winner}.
pub fn theta_matrix(step: &RauzyStep) -> IntMatrix {
    let mut m = IntMatrix::identity(step.pi.d());
    m.set(step.loser, step.winner, BigInt::one());
    m
}

/// Inverse of Theta, which is I - E_{loser, winner}.
pub fn theta_inverse(step: &RauzyStep) -> IntMatrix {
    let mut m = IntMatrix::identity(step.pi.d());
    m.set(step.loser, step.winner, BigInt::from(-1));
    m
}

/// Checks `theta * omega_pi == omega_next * (theta^t)^{-1}` exactly; returns the first bad entry.
///
/// A singular `theta` is reported at (0, 0).
pub fn intertwines(theta: &IntMatrix, omega_pi: &IntMatrix, omega_next: &IntMatrix) -> Option<(usize, usize)> {
    let lhs = exact::mat_mul(&theta.to_q(), &omega_pi.to_q());
    let Some(inv_t) = exact::inverse(&theta.transpose().to_q()) else {
        return Some((0, 0));
    };
    let rhs = exact::mat_mul(&omega_next.to_q(), &inv_t);
    for i in 0..theta.d() {
        for j in 0..theta.d() {
            if lhs[i][j] != rhs[i][j] {
                return Some((i, j));
            }
        }
    }
    None
}

pub fn check_intertwine(step: &RauzyStep) -> Result<()> {
    match intertwines(&theta_matrix(step), &omega_matrix(&step.pi), &omega_matrix(&step.next)) {
        None => Ok(()),
        Some((row, col)) => Err(CocycleError::Intertwine { step: 0, row, col }),
    }
}

pub fn genus(pi: &Permutation) -> usize {
    exact::rank(&omega_matrix(pi).to_q()) / 2
}

fn require_genus_one(pi: &Permutation) -> Result<()> {
    match genus(pi) {
        1 => Ok(()),
        g => Err(CocycleError::Genus(g)),
    }
}

/// Basis of ker Omega with entries in {-1, 0, 1}, found by enumeration in a fixed order.
pub fn ker_basis(pi: &Permutation) -> Result<Vec<Vec<i64>>> {
    require_genus_one(pi)?;
    let d = pi.d();
    let want = d - 2;
    let om = omega_matrix(pi);
    let mut basis: Vec<Vec<i64>> = Vec::new();
    if want == 0 {
        return Ok(basis);
    }
    let total = 3usize.pow(d as u32);
    for code in 1..total {
        let mut c = code;
        let v: Vec<i64> = (0..d)
            .map(|_| {
                let digit = (c % 3) as i64 - 1;
                c /= 3;
                digit
            })
            .collect();
        let bv: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        if !om.apply(&bv).iter().all(|x| x.is_zero()) {
            continue;
        }
        // keep a canonical sign: first nonzero entry positive
        if v.iter().find(|&&x| x != 0) != Some(&1) {
            continue;
        }
        let mut trial: Vec<Vec<Q>> = basis.iter().map(|b| b.iter().map(|&x| exact::q(x)).collect()).collect();
        trial.push(v.iter().map(|&x| exact::q(x)).collect());
        if exact::rank(&trial) == trial.len() {
            basis.push(v);
            if basis.len() == want {
                return Ok(basis);
            }
        }
    }
    Err(CocycleError::NoSmallKernelBasis)
}

fn ker_basis_q(pi: &Permutation) -> Result<Vec<Vec<Q>>> {
    Ok(ker_basis(pi)?
        .into_iter()
        .map(|v| v.into_iter().map(exact::q).collect())
        .collect())
}

/// Strict partial-sum conditions defining T^+.
fn tplus_rows(pi: &Permutation) -> Vec<Vec<i64>> {
    let d = pi.d();
    let mut rows = Vec::new();
    for (row, sign) in [(0u8, 1i64), (1u8, -1i64)] {
        let order = pi.order(row);
        for s in 1..d {
            let mut r = vec![0i64; d];
            for &a in &order[..s] {
                r[a] = sign;
            }
            rows.push(r);
        }
    }
    rows
}

pub fn in_cone_tplus(pi: &Permutation, tau: &[Q]) -> bool {
    tplus_rows(pi).iter().all(|r| {
        let s = r.iter().zip(tau).fold(Q::zero(), |acc, (&c, t)| acc + exact::q(c) * t);
        s.is_positive()
    })
}

/// A standard element of T^+: tau_a = pos1(a) - pos0(a).
pub fn canonical_tau(pi: &Permutation) -> Vec<i64> {
    (0..pi.d()).map(|a| pi.pos(1, a) as i64 - pi.pos(0, a) as i64).collect()
}

/// Affine parametrization `x0 + K t` of the solutions of `Omega x = v`.
fn preimages(pi: &Permutation, v: &[Q]) -> Result<Option<(Vec<Q>, Vec<Vec<Q>>)>> {
    let om = omega_matrix(pi).to_q();
    let Some(x0) = exact::solve(&om, v) else {
        return Ok(None);
    };
    Ok(Some((x0, ker_basis_q(pi)?)))
}

fn rows_for(x0: &[Q], k: &[Vec<Q>], coeff: &[Q]) -> (Vec<Q>, Q) {
    let a = k.iter().map(|kv| exact::dot(coeff, kv)).collect();
    (a, exact::dot(coeff, x0))
}

/// Is `v = Omega w` for some w with positive entries?
pub fn cone_cs(pi: &Permutation, v: &[Q]) -> Result<bool> {
    let Some((x0, k)) = preimages(pi, v)? else {
        return Ok(false);
    };
    let d = pi.d();
    let rows = (0..d)
        .map(|i| {
            let mut e = vec![Q::zero(); d];
            e[i] = Q::one();
            rows_for(&x0, &k, &e)
        })
        .collect();
    Ok(exact::strict_feasible(rows))
}

/// Is `v = -Omega tau` for some tau in T^+?
pub fn cone_cu(pi: &Permutation, v: &[Q]) -> Result<bool> {
    let neg: Vec<Q> = v.iter().map(|x| -x).collect();
    let Some((x0, k)) = preimages(pi, &neg)? else {
        return Ok(false);
    };
    let rows = tplus_rows(pi)
        .iter()
        .map(|r| rows_for(&x0, &k, &r.iter().map(|&c| exact::q(c)).collect::<Vec<_>>()))
        .collect();
    Ok(exact::strict_feasible(rows))
}

/// Ordered product Theta_{to-1} ... Theta_{from}; the empty range gives the identity.
pub fn cocycle_product(seq: &Sequence, from: usize, to: usize) -> IntMatrix {
    assert!(from <= to && to <= seq.len(), "range {from}..{to} outside sequence");
    let mut m = IntMatrix::identity(seq.d());
    for step in &seq.steps[from..to] {
        m = theta_matrix(step).mul(&m);
    }
    m
}

fn apply_theta(step: &RauzyStep, v: &mut [BigInt]) {
    let w = v[step.winner].clone();
    v[step.loser] += w;
}

fn apply_theta_inv(step: &RauzyStep, v: &mut [BigInt]) {
    let w = v[step.winner].clone();
    v[step.loser] -= w;
}

fn apply_theta_q(step: &RauzyStep, v: &mut [Q]) {
    let w = v[step.winner].clone();
    v[step.loser] += w;
}

fn l1_big(v: &[BigInt]) -> f64 {
    let s: BigInt = v.iter().map(|x| x.abs()).sum();
    exact::to_f64(&exact::qi(&s))
}

#[derive(Clone, Debug, Serialize)]
pub struct Hyperbolicity {
    pub unstable: RateEstimate,
    pub stable: RateEstimate,
}

/// Growth of sampled cone vectors: C^u forward from level 0, C^s backward from the end.
///
/// Averaged log-norms are fitted against n on `fit_from..=len`.
pub fn hyperbolicity_probe(seq: &Sequence, samples: usize, seed: u64, fit_from: usize) -> Result<Hyperbolicity> {
    let n = seq.len();
    if n < fit_from + 2 {
        return Err(CocycleError::TooShort { need: fit_from + 2, have: n });
    }
    let d = seq.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grow_u = vec![0.0; n + 1];
    let mut grow_s = vec![0.0; n + 1];
    let pi0 = seq.pi(0);
    let pin = seq.pi(n);
    let base = canonical_tau(pi0);
    for _ in 0..samples {
        let tau = loop {
            let t: Vec<i64> = base.iter().map(|&c| 8 * c + rng.gen_range(-3..=3)).collect();
            if in_cone_tplus(pi0, &t.iter().map(|&x| exact::q(x)).collect::<Vec<_>>()) {
                break t;
            }
        };
        let tau: Vec<BigInt> = tau.into_iter().map(BigInt::from).collect();
        let mut v: Vec<BigInt> = omega_matrix(pi0).apply(&tau).into_iter().map(|x| -x).collect();
        let v0 = l1_big(&v);
        for (j, step) in seq.steps.iter().enumerate() {
            apply_theta(step, &mut v);
            grow_u[j + 1] += (l1_big(&v) / v0).ln();
        }
        let w: Vec<BigInt> = (0..d).map(|_| BigInt::from(rng.gen_range(1..=9))).collect();
        let mut v = omega_matrix(pin).apply(&w);
        let v0 = l1_big(&v);
        for (j, step) in seq.steps.iter().enumerate().rev() {
            apply_theta_inv(step, &mut v);
            grow_s[n - j] += (l1_big(&v) / v0).ln();
        }
    }
    let pts = |g: &[f64]| -> Vec<(usize, f64)> {
        (fit_from..=n).map(|j| (j, (g[j] / samples as f64).exp())).collect()
    };
    Ok(Hyperbolicity {
        unstable: fit(&pts(&grow_u), RateModel::Exponential).unwrap(),
        stable: fit(&pts(&grow_s), RateModel::Exponential).unwrap(),
    })
}

/// Central directions of a periodic loop, written as `k + Psi(k)` for k in ker Omega.
#[derive(Clone, Debug)]
pub struct CentralSpace {
    /// Kernel basis of Omega at the base permutation.
    pub kernel: Vec<Vec<Q>>,
    /// Psi applied to each kernel basis vector; lies in Im Omega.
    pub psi: Vec<Vec<Q>>,
}

impl CentralSpace {
    /// Basis vectors `k_i + Psi(k_i)`.
    pub fn basis(&self) -> Vec<Vec<Q>> {
        self.kernel
            .iter()
            .zip(&self.psi)
            .map(|(k, p)| k.iter().zip(p).map(|(a, b)| a + b).collect())
            .collect()
    }

    pub fn basis_f64(&self) -> Vec<Vec<f64>> {
        self.basis().iter().map(|v| exact::vec_to_f64(v)).collect()
    }

    /// Psi extended to all of R^d through the orthogonal projection onto ker Omega.
    pub fn psi_operator(&self) -> Vec<Vec<Q>> {
        operator_from_pairs(&self.kernel, &self.psi, self.dim_ambient())
    }

    fn dim_ambient(&self) -> usize {
        self.kernel.first().map_or(0, |k| k.len())
    }
}

/// Matrix `P (K^t K)^{-1} K^t` sending each `k_i` to `p_i` and the complement of span(k) to 0.
fn operator_from_pairs(k: &[Vec<Q>], p: &[Vec<Q>], d: usize) -> Vec<Vec<Q>> {
    if k.is_empty() {
        return vec![vec![Q::zero(); d]; d];
    }
    let kt = k.to_vec();
    let kmat = exact::transpose(&kt);
    let gram = exact::mat_mul(&kt, &kmat);
    let ginv = exact::inverse(&gram).expect("independent kernel vectors");
    let pmat = exact::transpose(p);
    exact::mat_mul(&exact::mat_mul(&pmat, &ginv), &kt)
}

pub fn to_dmatrix(m: &[Vec<Q>]) -> DMatrix<f64> {
    let r = m.len();
    let c = m.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| exact::to_f64(&m[i][j]))
}

pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

fn image_basis(om: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let cols = exact::transpose(om);
    let mut out: Vec<Vec<Q>> = Vec::new();
    for c in cols {
        let mut trial = out.clone();
        trial.push(c.clone());
        if exact::rank(&trial) == trial.len() {
            out.push(c);
        }
    }
    out
}

/// Exact central space of a loop: `Psi(k) = ((M - I)|_{Im Omega})^{-1} (k - M k)`.
pub fn psi_p(lp: &Sequence) -> Result<CentralSpace> {
    if lp.end() != lp.pi(0) || lp.is_empty() {
        return Err(CocycleError::NotALoop);
    }
    let pi = lp.pi(0);
    let kernel = ker_basis_q(pi)?;
    let m = cocycle_product(lp, 0, lp.len());
    let om = omega_matrix(pi).to_q();
    let b = image_basis(&om);
    let d = pi.d();
    let mq = m.to_q();
    // A = (M - I) B, columns indexed by the image basis
    let bt = exact::transpose(&b);
    let mb = exact::mat_mul(&mq, &bt);
    let a: Vec<Vec<Q>> = (0..d)
        .map(|i| (0..b.len()).map(|j| &mb[i][j] - &bt[i][j]).collect())
        .collect();
    let at = exact::transpose(&a);
    let normal = exact::mat_mul(&at, &a);
    let ninv = exact::inverse(&normal).ok_or(CocycleError::Singular)?;
    let mut psi = Vec::new();
    for k in &kernel {
        let mk = exact::mat_vec(&mq, k);
        let r: Vec<Q> = k.iter().zip(&mk).map(|(x, y)| x - y).collect();
        let c = exact::mat_vec(&ninv, &exact::mat_vec(&at, &r));
        if exact::mat_vec(&a, &c) != r {
            return Err(CocycleError::Singular);
        }
        psi.push(exact::mat_vec(&bt, &c));
    }
    Ok(CentralSpace { kernel, psi })
}

/// Loop obtained by closing the first `n` steps back to the start.
pub fn closure(seq: &Sequence, n: usize) -> Result<Sequence> {
    let mut lp = seq.prefix(n);
    lp.steps.extend(close_path(lp.end(), seq.pi(0))?);
    Ok(lp)
}

/// Central space at level `j` estimated through loops closing the first n steps.
#[derive(Clone, Debug)]
pub struct CentralEstimate {
    pub level: usize,
    pub closures: Vec<usize>,
    /// Basis of the central space at level j for the last closure.
    pub basis: Vec<Vec<Q>>,
    /// Psi at level j for each closure.
    pub psi: Vec<Vec<Vec<Q>>>,
    /// Operator-norm differences between consecutive closures.
    pub increments: Vec<f64>,
    /// Operator norm of Psi for each closure.
    pub norms: Vec<f64>,
    /// Set when the last increment is not below 1e-6.
    pub warning: bool,
}

/// Pushes central vectors at level 0 to level `j` and re-expresses them over ker Omega there.
fn psi_at_level(seq: &Sequence, j: usize, basis0: &[Vec<Q>]) -> Result<(Vec<Vec<Q>>, Vec<Vec<Q>>)> {
    let mut pushed: Vec<Vec<Q>> = basis0.to_vec();
    for step in &seq.steps[..j] {
        for v in pushed.iter_mut() {
            apply_theta_q(step, v);
        }
    }
    let pi = seq.pi(j);
    let kernel = ker_basis_q(pi)?;
    let d = pi.d();
    let proj = operator_from_pairs(&kernel, &kernel, d);
    let ks: Vec<Vec<Q>> = pushed.iter().map(|v| exact::mat_vec(&proj, v)).collect();
    let ps: Vec<Vec<Q>> = pushed
        .iter()
        .zip(&ks)
        .map(|(v, k)| v.iter().zip(k).map(|(a, b)| a - b).collect())
        .collect();
    Ok((pushed, operator_from_pairs(&ks, &ps, d)))
}

pub fn central_space(seq: &Sequence, j: usize, closures: &[usize]) -> Result<CentralEstimate> {
    let mut psis = Vec::new();
    let mut basis = Vec::new();
    for &n in closures {
        if n < j || n > seq.len() {
            return Err(CocycleError::TooShort { need: n.max(j), have: seq.len() });
        }
        let lp = closure(seq, n)?;
        let cs = psi_p(&lp)?;
        let (b, op) = psi_at_level(seq, j, &cs.basis())?;
        basis = b;
        psis.push(op);
    }
    let mats: Vec<DMatrix<f64>> = psis.iter().map(|m| to_dmatrix(m)).collect();
    let norms = mats.iter().map(operator_norm).collect();
    let increments: Vec<f64> = mats.windows(2).map(|w| operator_norm(&(&w[1] - &w[0]))).collect();
    let warning = increments.last().is_some_and(|&x| x >= 1e-6);
    Ok(CentralEstimate {
        level: j,
        closures: closures.to_vec(),
        basis,
        psi: psis,
        increments,
        norms,
        warning,
    })
}

/// A direction estimated from successively deeper data.
#[derive(Clone, Debug)]
pub struct DirectionEstimate {
    pub level: usize,
    pub direction: Vec<f64>,
    /// Angles (radians) between estimates from consecutive depths.
    pub increments: Vec<f64>,
}

fn normalized(v: &[BigInt]) -> Vec<f64> {
    let q: Vec<Q> = v.iter().map(exact::qi).collect();
    let s = exact::l1(&q);
    let mut out: Vec<f64> = q.iter().map(|x| exact::to_f64(&(x / &s))).collect();
    let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    out.iter_mut().for_each(|x| *x /= n);
    // fix the sign by the largest entry
    let imax = (0..out.len()).max_by(|&a, &b| out[a].abs().total_cmp(&out[b].abs())).unwrap();
    if out[imax] < 0.0 {
        out.iter_mut().for_each(|x| *x = -*x);
    }
    out
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs();
    c.min(1.0).acos()
}

/// Stable direction at level `j`: Omega·1 at level j+t pulled back, for t = 1..=depth.
pub fn stable_space(seq: &Sequence, j: usize, depth: usize) -> Result<DirectionEstimate> {
    let need = j + depth;
    if need > seq.len() {
        return Err(CocycleError::TooShort { need, have: seq.len() });
    }
    require_genus_one(seq.pi(j))?;
    let mut dirs = Vec::new();
    for t in 1..=depth {
        let pi = seq.pi(j + t);
        let ones = vec![BigInt::one(); pi.d()];
        let mut v = omega_matrix(pi).apply(&ones);
        for step in seq.steps[j..j + t].iter().rev() {
            apply_theta_inv(step, &mut v);
        }
        dirs.push(normalized(&v));
    }
    let increments = dirs.windows(2).map(|w| angle(&w[0], &w[1])).collect();
    Ok(DirectionEstimate {
        level: j,
        direction: dirs.pop().unwrap(),
        increments,
    })
}

/// Unstable direction at level `j`: a C^u vector at level j-t pushed forward, t = 1..=depth.
pub fn unstable_space(seq: &Sequence, j: usize, depth: usize) -> Result<DirectionEstimate> {
    if j > seq.len() {
        return Err(CocycleError::TooShort { need: j, have: seq.len() });
    }
    let depth = depth.min(j).max(1);
    let mut dirs = Vec::new();
    for t in 1..=depth {
        let lo = j.saturating_sub(t);
        let pi = seq.pi(lo);
        let tau: Vec<BigInt> = canonical_tau(pi).into_iter().map(BigInt::from).collect();
        let mut v: Vec<BigInt> = omega_matrix(pi).apply(&tau).into_iter().map(|x| -x).collect();
        for step in &seq.steps[lo..j] {
            apply_theta(step, &mut v);
        }
        dirs.push(normalized(&v));
    }
    let increments = dirs.windows(2).map(|w| angle(&w[0], &w[1])).collect();
    Ok(DirectionEstimate {
        level: j,
        direction: dirs.pop().unwrap(),
        increments,
    })
}

/// Bases of E^s, E^c and E^u at one level, as floating-point vectors.
#[derive(Clone, Debug)]
pub struct SpectralSplit {
    pub level: usize,
    pub stable: Vec<f64>,
    pub central: Vec<Vec<f64>>,
    pub unstable: Vec<f64>,
}

/// Components of a vector along the three subspaces.
#[derive(Clone, Debug)]
pub struct Components {
    pub stable: Vec<f64>,
    pub central: Vec<f64>,
    pub unstable: Vec<f64>,
}

/// Smallest period of a sequence that repeats at least twice within its length.
pub fn period(seq: &Sequence) -> Option<usize> {
    let t = seq.types();
    (1..=t.len() / 2).find(|&p| seq.pi(p) == seq.pi(0) && (p..t.len()).all(|i| t[i] == t[i - p]))
}

/// Closure length for central spaces: the last return to the start permutation at or
/// after `min`, else the full length. Periodic sequences close after whole periods, so
/// the central space is the one fixed by the loop.
///
/// The central space depends on the chosen closure, so levels that are compared with
/// each other must share one.
pub fn return_closure(seq: &Sequence, min: usize) -> usize {
    let p = period(seq).unwrap_or(1);
    (min..=seq.len())
        .rev()
        .find(|&n| n > 0 && n % p == 0 && seq.pi(n) == seq.pi(0))
        .unwrap_or(seq.len())
}

/// Splitting at level `j` of a sequence long enough to look `depth` steps ahead.
pub fn spectral_split(seq: &Sequence, j: usize, depth: usize) -> Result<SpectralSplit> {
    spectral_split_closed(seq, j, depth, return_closure(seq, j + depth))
}

/// As [`spectral_split`], with the central space taken from the loop closing the first
/// `closure` steps.
pub fn spectral_split_closed(seq: &Sequence, j: usize, depth: usize, closure: usize) -> Result<SpectralSplit> {
    let stable = stable_space(seq, j, depth)?.direction;
    let unstable = unstable_space(seq, j, depth)?.direction;
    let central = if seq.d() > 2 {
        let ce = central_space(seq, j, &[closure])?;
        ce.basis.iter().map(|v| exact::vec_to_f64(v)).collect()
    } else {
        Vec::new()
    };
    Ok(SpectralSplit { level: j, stable, central, unstable })
}

pub fn split_vector(v: &[f64], split: &SpectralSplit) -> Result<Components> {
    let d = v.len();
    let mut cols: Vec<&[f64]> = vec![&split.stable];
    cols.extend(split.central.iter().map(|c| c.as_slice()));
    cols.push(&split.unstable);
    let m = DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]);
    let sv = m.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > 1e12 {
        return Err(CocycleError::IllConditioned(cond));
    }
    let c = m
        .lu()
        .solve(&DVector::from_column_slice(v))
        .ok_or(CocycleError::IllConditioned(f64::INFINITY))?;
    let scale = |w: &[f64], s: f64| w.iter().map(|x| x * s).collect::<Vec<_>>();
    let mut central = vec![0.0; d];
    for (i, b) in split.central.iter().enumerate() {
        for (x, y) in central.iter_mut().zip(b) {
            *x += c[i + 1] * y;
        }
    }
    Ok(Components {
        stable: scale(&split.stable, c[0]),
        central,
        unstable: scale(&split.unstable, c[cols.len() - 1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{rauzy_class, rauzy_move};

    fn rot3() -> Permutation {
        Permutation::from_rows("ABC", "CAB").unwrap()
    }

    fn golden(n: usize) -> Sequence {
        let p = Permutation::from_rows("AB", "BA").unwrap();
        Sequence::from_types(&p, &[0, 1].repeat(n / 2)).unwrap()
    }

    #[test]
    fn omega_of_symmetric_three() {
        let p = Permutation::from_rows("ABC", "CBA").unwrap();
        let om = omega_matrix(&p);
        assert_eq!(om, IntMatrix::from_rows(&[vec![0, 1, 1], vec![-1, 0, 1], vec![-1, -1, 0]]));
        assert_eq!(ker_basis(&p).unwrap(), vec![vec![1, -1, 1]]);
    }

    #[test]
    fn intertwining_on_classes() {
        for p in [rot3(), Permutation::from_rows("AB", "BA").unwrap(), Permutation::from_rows("ABCD", "DCBA").unwrap()] {
            for q in rauzy_class(&p) {
                for eps in 0..2 {
                    check_intertwine(&rauzy_move(&q, eps).unwrap()).unwrap();
                }
            }
        }
    }

    #[test]
    fn corrupted_theta_is_caught() {
        let step = rauzy_move(&rot3(), 0).unwrap();
        let mut th = theta_matrix(&step);
        th.set(step.winner, step.loser, BigInt::one());
        assert!(intertwines(&th, &omega_matrix(&step.pi), &omega_matrix(&step.next)).is_some());
    }

    #[test]
    fn genus_two_is_rejected() {
        let p = Permutation::from_rows("ABCD", "DCBA").unwrap();
        assert_eq!(genus(&p), 2);
        assert!(matches!(ker_basis(&p), Err(CocycleError::Genus(2))));
    }

    #[test]
    fn golden_products_are_fibonacci() {
        let seq = golden(20);
        let (mut a, mut b) = (1i64, 1i64);
        for m in 1..=10 {
            let p = cocycle_product(&seq, 0, 2 * m);
            // rows (A, B): [[F, F'], [F', F'']] with consecutive Fibonacci numbers
            let f = |i, j| p.get(i, j).clone();
            assert_eq!(f(0, 1), f(1, 0));
            assert_eq!(f(0, 0) + f(0, 1), f(1, 1));
            assert_eq!((f(0, 0), f(0, 1)), (BigInt::from(a), BigInt::from(b)));
            let c = a + b;
            a = c;
            b += c;
        }
        assert_eq!(cocycle_product(&seq, 3, 3), IntMatrix::identity(2));
    }

    #[test]
    fn cones_are_mapped_into_cones() {
        let seq = Sequence::from_types(&rot3(), &[1, 0, 1, 0, 1, 0, 0, 1]).unwrap();
        let pi = seq.pi(0);
        let tau: Vec<BigInt> = canonical_tau(pi).into_iter().map(BigInt::from).collect();
        let mut u: Vec<BigInt> = omega_matrix(pi).apply(&tau).into_iter().map(|x| -x).collect();
        let w = vec![BigInt::from(2), BigInt::from(1), BigInt::from(3)];
        let mut s = omega_matrix(seq.end()).apply(&w);
        assert!(cone_cu(pi, &u.iter().map(exact::qi).collect::<Vec<_>>()).unwrap());
        for (j, step) in seq.steps.iter().enumerate() {
            apply_theta(step, &mut u);
            assert!(cone_cu(seq.pi(j + 1), &u.iter().map(exact::qi).collect::<Vec<_>>()).unwrap());
        }
        for (j, step) in seq.steps.iter().enumerate().rev() {
            apply_theta_inv(step, &mut s);
            assert!(cone_cs(seq.pi(j), &s.iter().map(exact::qi).collect::<Vec<_>>()).unwrap());
        }
        // a kernel vector is in neither cone
        let k: Vec<Q> = ker_basis(pi).unwrap()[0].iter().map(|&x| exact::q(x)).collect();
        assert!(!cone_cs(pi, &k).unwrap());
        assert!(!cone_cu(pi, &k).unwrap());
    }

    #[test]
    fn alternating_loop_central_vector_is_fixed() {
        let lp = Sequence::from_types(&rot3(), &[1, 0, 1, 0, 1, 0]).unwrap();
        assert_eq!(lp.end(), lp.pi(0));
        let cs = psi_p(&lp).unwrap();
        let m = cocycle_product(&lp, 0, lp.len());
        for v in cs.basis() {
            assert_eq!(m.apply_q(&v), v);
        }
        // Psi lands in Im Omega, which is orthogonal to the kernel
        for (k, p) in cs.kernel.iter().zip(&cs.psi) {
            assert!(exact::dot(k, p).is_zero());
        }
    }

    #[test]
    fn stable_direction_of_golden() {
        let seq = golden(40);
        let est = stable_space(&seq, 0, 30).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let ratio = est.direction[1] / est.direction[0];
        assert!((ratio + 1.0 / phi).abs() < 1e-10, "{ratio}");
        assert!(est.increments.last().unwrap() < &1e-10);
    }

    #[test]
    fn golden_growth_rate() {
        let h = hyperbolicity_probe(&golden(40), 8, 1, 10).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((h.unstable.rate / phi - 1.0).abs() < 0.02);
        assert!((h.stable.rate / phi - 1.0).abs() < 0.02);
    }

    #[test]
    fn split_recovers_components() {
        let lp = Sequence::from_types(&rot3(), &[1, 0, 1, 0, 1, 0]).unwrap();
        let seq = lp.extend_periodic(60).unwrap();
        let sp = spectral_split(&seq, 6, 30).unwrap();
        let v: Vec<f64> = (0..3)
            .map(|i| 2.0 * sp.stable[i] - 0.5 * sp.central[0][i] + 0.25 * sp.unstable[i])
            .collect();
        let c = split_vector(&v, &sp).unwrap();
        for i in 0..3 {
            assert!((c.stable[i] - 2.0 * sp.stable[i]).abs() < 1e-10);
            assert!((c.unstable[i] - 0.25 * sp.unstable[i]).abs() < 1e-10);
        }
    }
}
