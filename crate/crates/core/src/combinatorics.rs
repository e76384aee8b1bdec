//! Permutation pairs, Rauzy moves and combinatorial sequences.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Letters are indices into the alphabet, which is kept sorted.
pub type Letter = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombinatoricsError {
    #[error("malformed permutation pair: {0}")]
    Malformed(String),
    #[error("reducible permutation pair: first {0} letters are invariant")]
    Reducible(usize),
    #[error("target permutation is not reachable from the start")]
    Unreachable,
    #[error("no {k}-bounded sequence of length {length} exists from this start")]
    Infeasible { k: usize, length: usize },
    #[error("search budget of {0} nodes exhausted")]
    BudgetExhausted(usize),
    #[error("rauzy type must be 0 or 1, got {0}")]
    BadType(u8),
    #[error("sequence does not chain: step {0} starts away from the previous endpoint")]
    Broken(usize),
}

type Result<T> = std::result::Result<T, CombinatoricsError>;

/// A pair (pi0, pi1) of bijections from the alphabet to positions.
///
/// Positions are stored 0-based; the JSON form uses 1-based positions.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    alphabet: Vec<String>,
    pi0: Vec<usize>,
    pi1: Vec<usize>,
}

/// Raw JSON form; validation happens on conversion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PermutationJson {
    pub alphabet: Vec<String>,
    pub pi0: BTreeMap<String, usize>,
    pub pi1: BTreeMap<String, usize>,
}

fn check_bijection(name: &str, alphabet: &[String], map: &BTreeMap<String, usize>) -> Result<Vec<usize>> {
    let d = alphabet.len();
    if map.len() != d {
        return Err(CombinatoricsError::Malformed(format!(
            "{name} has {} entries for {d} letters",
            map.len()
        )));
    }
    let mut seen = vec![false; d];
    let mut out = Vec::with_capacity(d);
    for letter in alphabet {
        let p = *map
            .get(letter)
            .ok_or_else(|| CombinatoricsError::Malformed(format!("{name} misses letter {letter}")))?;
        if p == 0 || p > d || seen[p - 1] {
            return Err(CombinatoricsError::Malformed(format!(
                "{name} is not a bijection onto 1..{d} (letter {letter} -> {p})"
            )));
        }
        seen[p - 1] = true;
        out.push(p - 1);
    }
    Ok(out)
}

/// Checks a raw permutation pair.
///
/// Malformed maps are errors; a well-formed but reducible pair gives `Ok(false)`.
pub fn validate(raw: &PermutationJson) -> Result<bool> {
    match Permutation::try_from(raw.clone()) {
        Ok(_) => Ok(true),
        Err(CombinatoricsError::Reducible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

impl TryFrom<PermutationJson> for Permutation {
    type Error = CombinatoricsError;

    fn try_from(raw: PermutationJson) -> Result<Self> {
        let mut alphabet = raw.alphabet.clone();
        alphabet.sort();
        alphabet.dedup();
        if alphabet.len() != raw.alphabet.len() {
            return Err(CombinatoricsError::Malformed("repeated letter in alphabet".into()));
        }
        if alphabet.len() < 2 {
            return Err(CombinatoricsError::Malformed("need at least two letters".into()));
        }
        let pi0 = check_bijection("pi0", &alphabet, &raw.pi0)?;
        let pi1 = check_bijection("pi1", &alphabet, &raw.pi1)?;
        Permutation::new(alphabet, pi0, pi1)
    }
}

impl From<&Permutation> for PermutationJson {
    fn from(p: &Permutation) -> Self {
        let map = |v: &[usize]| {
            p.alphabet
                .iter()
                .zip(v)
                .map(|(a, &i)| (a.clone(), i + 1))
                .collect::<BTreeMap<_, _>>()
        };
        PermutationJson {
            alphabet: p.alphabet.clone(),
            pi0: map(&p.pi0),
            pi1: map(&p.pi1),
        }
    }
}

impl Serialize for Permutation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PermutationJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PermutationJson::deserialize(d)?;
        Permutation::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl Permutation {
    /// Builds from a sorted alphabet and 0-based position vectors, checking irreducibility.
    pub fn new(alphabet: Vec<String>, pi0: Vec<usize>, pi1: Vec<usize>) -> Result<Self> {
        let d = alphabet.len();
        if pi0.len() != d || pi1.len() != d {
            return Err(CombinatoricsError::Malformed("length mismatch".into()));
        }
        for v in [&pi0, &pi1] {
            let mut seen = vec![false; d];
            for &p in v.iter() {
                if p >= d || seen[p] {
                    return Err(CombinatoricsError::Malformed("positions are not a bijection".into()));
                }
                seen[p] = true;
            }
        }
        let p = Permutation { alphabet, pi0, pi1 };
        if let Some(s) = p.invariant_prefix() {
            return Err(CombinatoricsError::Reducible(s));
        }
        Ok(p)
    }

    /// Parses the two rows as letter strings, e.g. `("ABC", "CAB")`.
    ///
    /// Each row lists letters in order of position; letters are single characters.
    pub fn from_rows(top: &str, bottom: &str) -> Result<Self> {
        let mut alphabet: Vec<String> = top.chars().map(String::from).collect();
        alphabet.sort();
        let index = |c: char| alphabet.iter().position(|a| a.as_str() == c.to_string());
        let mut pi0 = vec![usize::MAX; alphabet.len()];
        let mut pi1 = vec![usize::MAX; alphabet.len()];
        if top.chars().count() != alphabet.len() || bottom.chars().count() != alphabet.len() {
            return Err(CombinatoricsError::Malformed("rows differ in length".into()));
        }
        for (pos, c) in top.chars().enumerate() {
            pi0[index(c).ok_or_else(|| CombinatoricsError::Malformed(format!("letter {c}")))?] = pos;
        }
        for (pos, c) in bottom.chars().enumerate() {
            pi1[index(c).ok_or_else(|| CombinatoricsError::Malformed(format!("letter {c}")))?] = pos;
        }
        Permutation::new(alphabet, pi0, pi1)
    }

    fn invariant_prefix(&self) -> Option<usize> {
        (1..self.d()).find(|&s| (0..self.d()).all(|a| (self.pi0[a] < s) == (self.pi1[a] < s)))
    }

    pub fn d(&self) -> usize {
        self.alphabet.len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn name(&self, a: Letter) -> &str {
        &self.alphabet[a]
    }

    /// 0-based position of `a` in row `row`.
    pub fn pos(&self, row: u8, a: Letter) -> usize {
        if row == 0 {
            self.pi0[a]
        } else {
            self.pi1[a]
        }
    }

    /// Letters of row `row` listed by position.
    pub fn order(&self, row: u8) -> Vec<Letter> {
        let v = if row == 0 { &self.pi0 } else { &self.pi1 };
        let mut out = vec![0; v.len()];
        for (a, &p) in v.iter().enumerate() {
            out[p] = a;
        }
        out
    }

    /// alpha(row): the letter in the last position of the row.
    pub fn last(&self, row: u8) -> Letter {
        let v = if row == 0 { &self.pi0 } else { &self.pi1 };
        v.iter().position(|&p| p == v.len() - 1).unwrap()
    }

    pub fn winner(&self, eps: u8) -> Letter {
        self.last(eps)
    }

    pub fn loser(&self, eps: u8) -> Letter {
        self.last(1 - eps)
    }

    /// Letters whose left endpoint is a discontinuity of the exchange viewed on the circle.
    pub fn discontinuities(&self) -> Vec<Letter> {
        let o0 = self.order(0);
        (1..self.d())
            .filter(|&i| self.pi1[o0[i]] != self.pi1[o0[i - 1]] + 1)
            .map(|i| o0[i])
            .collect()
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |r: u8| {
            self.order(r)
                .iter()
                .map(|&a| self.alphabet[a].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        };
        write!(f, "{} / {}", row(0), row(1))
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

/// One Rauzy move with its data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RauzyStep {
    pub pi: Permutation,
    pub eps: u8,
    pub winner: Letter,
    pub loser: Letter,
    pub next: Permutation,
}

/// Applies the Rauzy move of type `eps`.
pub fn rauzy_move(pi: &Permutation, eps: u8) -> Result<RauzyStep> {
    if eps > 1 {
        return Err(CombinatoricsError::BadType(eps));
    }
    let winner = pi.winner(eps);
    let loser = pi.loser(eps);
    let moved_row = 1 - eps;
    let mut order = pi.order(moved_row);
    let target = pi.pos(moved_row, winner);
    // the loser sits last in its row; move it right after the winner
    order.pop();
    order.insert(target + 1, loser);
    let mut next = pi.clone();
    let v = if moved_row == 0 { &mut next.pi0 } else { &mut next.pi1 };
    for (p, &a) in order.iter().enumerate() {
        v[a] = p;
    }
    Ok(RauzyStep {
        pi: pi.clone(),
        eps,
        winner,
        loser,
        next,
    })
}

/// The Rauzy class of `pi` in breadth-first order (type 0 explored before type 1).
pub fn rauzy_class(pi: &Permutation) -> Vec<Permutation> {
    let mut seen: HashMap<Permutation, ()> = HashMap::new();
    let mut out = vec![pi.clone()];
    let mut queue = VecDeque::from([pi.clone()]);
    seen.insert(pi.clone(), ());
    while let Some(p) = queue.pop_front() {
        for eps in 0..2 {
            let n = rauzy_move(&p, eps).unwrap().next;
            if seen.insert(n.clone(), ()).is_none() {
                out.push(n.clone());
                queue.push_back(n);
            }
        }
    }
    out
}

/// A finite path in the Rauzy graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub start: Permutation,
    pub steps: Vec<RauzyStep>,
}

impl Sequence {
    pub fn new(start: Permutation) -> Self {
        Sequence { start, steps: Vec::new() }
    }

    pub fn from_types(start: &Permutation, types: &[u8]) -> Result<Self> {
        let mut s = Sequence::new(start.clone());
        for &e in types {
            s.push(e)?;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn d(&self) -> usize {
        self.start.d()
    }

    /// Permutation at level `n` (0 ≤ n ≤ len).
    pub fn pi(&self, n: usize) -> &Permutation {
        if n == 0 {
            &self.start
        } else {
            &self.steps[n - 1].next
        }
    }

    pub fn end(&self) -> &Permutation {
        self.pi(self.len())
    }

    pub fn push(&mut self, eps: u8) -> Result<&RauzyStep> {
        let step = rauzy_move(self.end(), eps)?;
        self.steps.push(step);
        Ok(self.steps.last().unwrap())
    }

    pub fn types(&self) -> Vec<u8> {
        self.steps.iter().map(|s| s.eps).collect()
    }

    pub fn prefix(&self, n: usize) -> Sequence {
        Sequence {
            start: self.start.clone(),
            steps: self.steps[..n].to_vec(),
        }
    }

    /// Checks that every step starts where the previous one ended.
    pub fn check_chained(&self) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            if &s.pi != self.pi(i) {
                return Err(CombinatoricsError::Broken(i));
            }
        }
        Ok(())
    }

    /// Appends the shortest path back to the start, then repeats the resulting loop
    /// until at least `len` steps exist.
    pub fn extend_periodic(&self, len: usize) -> Result<Sequence> {
        let mut out = self.clone();
        let closing = close_path(self.end(), &self.start)?;
        out.steps.extend(closing);
        if out.is_empty() {
            return Err(CombinatoricsError::Unreachable);
        }
        let period = out.steps.clone();
        while out.len() < len {
            out.steps.extend(period.iter().cloned());
        }
        Ok(out)
    }
}

/// Shortest path from `from` to `target` in the Rauzy graph.
///
/// Ties are broken lexicographically on the types, which also fixes the winners.
pub fn close_path(from: &Permutation, target: &Permutation) -> Result<Vec<RauzyStep>> {
    if from == target {
        return Ok(Vec::new());
    }
    let mut parent: HashMap<Permutation, RauzyStep> = HashMap::new();
    let mut queue = VecDeque::from([from.clone()]);
    while let Some(p) = queue.pop_front() {
        for eps in 0..2 {
            let step = rauzy_move(&p, eps)?;
            let n = step.next.clone();
            if n == *from || parent.contains_key(&n) {
                continue;
            }
            parent.insert(n.clone(), step);
            if n == *target {
                let mut path = Vec::new();
                let mut cur = n;
                while cur != *from {
                    let s = parent[&cur].clone();
                    cur = s.pi.clone();
                    path.push(s);
                }
                path.reverse();
                return Ok(path);
            }
            queue.push_back(n);
        }
    }
    Err(CombinatoricsError::Unreachable)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KBound {
    Yes,
    /// A window centred at `n` has no witness for the pair (beta, gamma).
    No { n: usize, beta: Letter, gamma: Letter },
    /// The sequence is too short to hold any full window.
    Indeterminate,
}

fn alpha(seq: &Sequence, m: usize, row: u8) -> Letter {
    seq.steps[m].pi.last(row)
}

/// First pair without a witness in the window centred at `n`.
fn window_failure(seq: &Sequence, n: usize, k: usize) -> Option<(Letter, Letter)> {
    let d = seq.d();
    let lo = n + 1 - k;
    let hi = n + k - 1;
    let mut found = vec![false; d * d];
    for n1 in lo..=hi {
        let beta = seq.steps[n1].winner;
        for m in n1..=hi {
            let gamma = seq.steps[m].loser;
            if found[beta * d + gamma] {
                continue;
            }
            let eps_m = seq.steps[m].eps;
            let chained = (n1..m).all(|j| alpha(seq, j, 1 - eps_m) == alpha(seq, j + 1, seq.steps[j].eps));
            if chained {
                found[beta * d + gamma] = true;
            }
        }
    }
    (0..d * d).find(|&i| !found[i]).map(|i| (i / d, i % d))
}

/// Checks k-boundedness on every window that fits inside the sequence.
pub fn is_k_bounded(seq: &Sequence, k: usize) -> KBound {
    if k == 0 || seq.len() + 1 < 2 * k {
        return KBound::Indeterminate;
    }
    for n in k - 1..=seq.len() - k {
        if let Some((beta, gamma)) = window_failure(seq, n, k) {
            return KBound::No { n, beta, gamma };
        }
    }
    KBound::Yes
}

/// Smallest k ≤ `max_k` for which every full window passes.
pub fn minimal_k(seq: &Sequence, max_k: usize) -> Option<usize> {
    (1..=max_k).find(|&k| is_k_bounded(seq, k) == KBound::Yes)
}

/// Random k-bounded sequence by depth-first search with randomized type order.
pub fn generate_k_bounded(start: &Permutation, length: usize, k: usize, seed: u64) -> Result<Sequence> {
    const BUDGET: usize = 1 << 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = Sequence::new(start.clone());
    let mut choices: Vec<Vec<u8>> = Vec::new();
    let mut nodes = 0usize;
    let mut pending = {
        let mut c = vec![0u8, 1];
        c.shuffle(&mut rng);
        c
    };
    loop {
        if seq.len() == length {
            return Ok(seq);
        }
        match pending.pop() {
            Some(eps) => {
                nodes += 1;
                if nodes > BUDGET {
                    return Err(CombinatoricsError::BudgetExhausted(BUDGET));
                }
                seq.push(eps)?;
                let ok = k > 0
                    && (seq.len() < 2 * k - 1 || window_failure(&seq, seq.len() - k, k).is_none());
                if ok {
                    choices.push(std::mem::take(&mut pending));
                    pending = vec![0, 1];
                    pending.shuffle(&mut rng);
                } else {
                    seq.steps.pop();
                }
            }
            None => match choices.pop() {
                Some(rest) => {
                    seq.steps.pop();
                    pending = rest;
                }
                None => return Err(CombinatoricsError::Infeasible { k, length }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym3() -> Permutation {
        Permutation::from_rows("ABC", "CBA").unwrap()
    }

    #[test]
    fn reducible_and_malformed_are_distinct() {
        let raw: PermutationJson = serde_json::from_str(
            r#"{"alphabet":["A","B","C"],"pi0":{"A":1,"B":2,"C":3},"pi1":{"A":1,"B":3,"C":2}}"#,
        )
        .unwrap();
        assert_eq!(validate(&raw), Ok(false));
        let bad: PermutationJson = serde_json::from_str(
            r#"{"alphabet":["A","B","C"],"pi0":{"A":1,"B":1,"C":3},"pi1":{"A":3,"B":2,"C":1}}"#,
        )
        .unwrap();
        assert!(matches!(validate(&bad), Err(CombinatoricsError::Malformed(_))));
        let good: PermutationJson = serde_json::from_str(
            r#"{"alphabet":["A","B","C"],"pi0":{"A":1,"B":2,"C":3},"pi1":{"A":3,"B":2,"C":1}}"#,
        )
        .unwrap();
        assert_eq!(validate(&good), Ok(true));
    }

    #[test]
    fn two_letter_move_is_trivial() {
        let p = Permutation::from_rows("AB", "BA").unwrap();
        for eps in 0..2 {
            let s = rauzy_move(&p, eps).unwrap();
            assert_eq!(s.next, p);
            assert_ne!(s.winner, s.loser);
        }
        assert_eq!(rauzy_class(&p).len(), 1);
    }

    #[test]
    fn symmetric_three_class() {
        let class = rauzy_class(&sym3());
        let mut names: Vec<String> = class.iter().map(|p| p.to_string()).collect();
        names.sort();
        assert_eq!(names, vec!["A B C / C A B", "A B C / C B A", "A C B / C B A"]);
    }

    #[test]
    fn move_examples() {
        let s = rauzy_move(&sym3(), 0).unwrap();
        assert_eq!(s.next.to_string(), "A B C / C A B");
        assert_eq!((s.winner, s.loser), (2, 0));
        let s = rauzy_move(&sym3(), 1).unwrap();
        assert_eq!(s.next.to_string(), "A C B / C B A");
        assert_eq!((s.winner, s.loser), (0, 2));
    }

    #[test]
    fn json_round_trip() {
        let p = Permutation::from_rows("BCA", "ACB").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: Permutation = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn closing_returns_to_target() {
        let p = sym3();
        let mut seq = Sequence::from_types(&p, &[0, 1, 1]).unwrap();
        let tail = close_path(seq.end(), &p).unwrap();
        seq.steps.extend(tail);
        assert_eq!(seq.end(), &p);
        seq.check_chained().unwrap();
    }

    #[test]
    fn golden_is_two_bounded() {
        let p = Permutation::from_rows("AB", "BA").unwrap();
        let seq = Sequence::from_types(&p, &[0, 1].repeat(20)).unwrap();
        assert_eq!(is_k_bounded(&seq, 2), KBound::Yes);
        let flat = Sequence::from_types(&p, &[0; 30]).unwrap();
        assert!(matches!(is_k_bounded(&flat, 10), KBound::No { .. }));
        let short = Sequence::from_types(&p, &[0, 1]).unwrap();
        assert_eq!(is_k_bounded(&short, 5), KBound::Indeterminate);
    }

    #[test]
    fn generated_sequences_pass_their_own_check() {
        let p = Permutation::from_rows("ABC", "CAB").unwrap();
        let seq = generate_k_bounded(&p, 60, 5, 7).unwrap();
        assert_eq!(seq.len(), 60);
        assert_eq!(is_k_bounded(&seq, 5), KBound::Yes);
        let again = generate_k_bounded(&p, 60, 5, 7).unwrap();
        assert_eq!(seq, again);
        assert!(matches!(
            generate_k_bounded(&p, 30, 1, 0),
            Err(CombinatoricsError::Infeasible { .. })
        ));
    }
}
