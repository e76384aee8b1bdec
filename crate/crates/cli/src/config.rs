//! Experiment configuration files.

use std::collections::BTreeMap;
use std::sync::Arc;

use giet::affine::{self, AffineIem};
use giet::combinatorics::{Permutation, PermutationJson, Sequence};
use giet::fixtures;
use giet::giem::{self, BranchMap, Giem, Warp};
use rug::Float;
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One or two map blocks.
    #[serde(default)]
    pub maps: Vec<Value>,
    /// Combinatorics for `cocycle-audit` when no map is given.
    pub combinatorics: Option<PermutationJson>,
    /// Explicit Rauzy path as `[{"eps": 0}, ...]`.
    pub sequence: Option<Vec<SeqStep>>,
    /// Bound used to generate a path when none is given.
    pub k: Option<usize>,
    pub depth: Option<usize>,
    pub precision_bits: Option<u32>,
    pub nodes: Option<usize>,
    pub samples: Option<usize>,
    pub rng_seed: Option<u64>,
    /// Rigidity: depth of the matched table and of ψ.
    pub table_depth: Option<usize>,
    /// Affine models: deepest level whose mean log-derivative is pulled back.
    pub extract_depth: Option<usize>,
    pub lookahead: Option<usize>,
    /// Affine models: length of the Rauzy path used to solve for the lengths.
    pub model_depth: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub nonlinearity: f64,
    pub cauchy: f64,
    pub c8_spread: f64,
    /// Length of `I^N` below which the h-enclosures are narrow enough.
    pub enclosure_length: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            nonlinearity: 1e-10,
            cauchy: 1e-8,
            c8_spread: 1e-6,
            enclosure_length: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqStep {
    pub eps: u8,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("nonlinearity", t.nonlinearity),
            ("cauchy", t.cauchy),
            ("c8_spread", t.c8_spread),
            ("enclosure_length", t.enclosure_length),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(CliError::Config(format!("tolerance {name} must be positive")));
            }
        }
        if self.maps.len() > 2 {
            return Err(CliError::Config("at most two maps".into()));
        }
        if let Some(b) = self.precision_bits {
            check_bits(b)?;
        }
        Ok(())
    }

    /// Precision from the flag, then the config, then the environment, then 256.
    pub fn precision(&self, flag: Option<u32>) -> Result<u32, CliError> {
        let env = match std::env::var("GIET_PRECISION_BITS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| CliError::Config(format!("GIET_PRECISION_BITS={v:?} is not an integer")))?,
            ),
            Err(_) => None,
        };
        let bits = flag.or(self.precision_bits).or(env).unwrap_or(giem::DEFAULT_PRECISION);
        check_bits(bits)?;
        Ok(bits)
    }

    pub fn map(&self, i: usize, prec: u32) -> Result<Arc<Giem>, CliError> {
        let v = self
            .maps
            .get(i)
            .ok_or_else(|| CliError::Config(format!("config needs at least {} map block(s)", i + 1)))?;
        Ok(Arc::new(build_map(v, prec)?))
    }

    pub fn permutation(&self, prec: u32) -> Result<Permutation, CliError> {
        if let Some(raw) = &self.combinatorics {
            return Permutation::try_from(raw.clone()).map_err(|e| CliError::Hypothesis(e.to_string()));
        }
        Ok(self.map(0, prec)?.pi().clone())
    }

    pub fn explicit_sequence(&self, pi: &Permutation) -> Result<Option<Sequence>, CliError> {
        match &self.sequence {
            None => Ok(None),
            Some(steps) => {
                let types: Vec<u8> = steps.iter().map(|s| s.eps).collect();
                Sequence::from_types(pi, &types)
                    .map(Some)
                    .map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}

fn check_bits(b: u32) -> Result<(), CliError> {
    if !(53..=65536).contains(&b) {
        return Err(CliError::Config(format!("precision_bits {b} outside 53..=65536")));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineBlock {
    pi: PermutationJson,
    lengths: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchBlock {
    family: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GiemBlock {
    alphabet: Vec<String>,
    pi0: BTreeMap<String, usize>,
    pi1: BTreeMap<String, usize>,
    lengths: Vec<f64>,
    /// Either image lengths or slopes (`|image| = e^slope |domain|`, rescaled to sum 1).
    image_lengths: Option<Vec<f64>>,
    slopes: Option<Vec<f64>>,
    #[serde(default)]
    branches: Vec<BranchBlock>,
    /// Conjugates the affine map given by the other fields.
    warp: Option<Warp>,
    precision_bits: Option<u32>,
}

fn param(b: &BranchBlock, name: &str) -> Result<f64, CliError> {
    b.params
        .get(name)
        .copied()
        .ok_or_else(|| CliError::Config(format!("branch family {} needs parameter {name}", b.family)))
}

fn branch(b: &BranchBlock) -> Result<BranchMap, CliError> {
    match b.family.as_str() {
        "affine" => Ok(BranchMap::Affine),
        "moebius" => Ok(BranchMap::Moebius { a: param(b, "a")? }),
        "perturbed_affine" | "sine_bump" => Ok(BranchMap::SineBump { amp: param(b, "amp")? }),
        other => Err(CliError::Config(format!(
            "unknown branch family {other:?}; known: affine, moebius, perturbed_affine"
        ))),
    }
}

/// A map block: `{"builtin": name}`, an affine block `{"pi", "lengths", "slopes"}`, or a
/// full block with alphabet, positions, lengths and branches.
pub fn build_map(v: &Value, prec: u32) -> Result<Giem, CliError> {
    let obj = v
        .as_object()
        .ok_or_else(|| CliError::Config("map block must be an object".into()))?;
    let invalid = |e: giem::GiemError| CliError::from(e);
    if let Some(name) = obj.get("builtin") {
        let name = name
            .as_str()
            .ok_or_else(|| CliError::Config("builtin must be a string".into()))?;
        if obj.len() != 1 {
            return Err(CliError::Config("a builtin block takes no other fields".into()));
        }
        return fixtures::builtin(name, prec).map_err(|e| CliError::Config(e.to_string()));
    }
    if obj.contains_key("pi") {
        let a: AffineBlock = serde_json::from_value(v.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        let pi = Permutation::try_from(a.pi).map_err(|e| CliError::Hypothesis(e.to_string()))?;
        let m: AffineIem = affine::build_affine(pi, &a.lengths, &a.slopes, false).map_err(CliError::from)?;
        return m.to_giem(prec).map_err(CliError::from);
    }
    let g: GiemBlock = serde_json::from_value(v.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let pi = Permutation::try_from(PermutationJson {
        alphabet: g.alphabet,
        pi0: g.pi0,
        pi1: g.pi1,
    })
    .map_err(|e| CliError::Hypothesis(e.to_string()))?;
    let prec = g.precision_bits.unwrap_or(prec);
    check_bits(prec)?;
    let dom: Vec<Float> = g.lengths.iter().map(|&x| Float::with_val(prec, x)).collect();
    let img = match (g.image_lengths, g.slopes) {
        (Some(i), None) => i.iter().map(|&x| Float::with_val(prec, x)).collect(),
        (None, Some(s)) => giem::scaled_images(&dom, &s, prec),
        _ => return Err(CliError::Config("give exactly one of image_lengths and slopes".into())),
    };
    let branches = if g.branches.is_empty() {
        vec![BranchMap::Affine; dom.len()]
    } else {
        g.branches.iter().map(branch).collect::<Result<Vec<_>, _>>()?
    };
    let f = Giem::new(pi, dom, img, branches, prec).map_err(invalid)?;
    match g.warp {
        None => Ok(f),
        Some(w) => Giem::conjugate(&f, w).map_err(invalid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_parse() {
        let c = ExperimentConfig::parse(
            r#"{"maps": [
                {"builtin": "d3-moebius"},
                {"pi": {"alphabet": ["A","B"], "pi0": {"A":1,"B":2}, "pi1": {"A":2,"B":1}},
                 "lengths": [0.4, 0.6], "slopes": [0.0, 0.0]}
            ], "depth": 5}"#,
        )
        .unwrap();
        assert_eq!(c.map(0, 128).unwrap().d(), 3);
        assert_eq!(c.map(1, 128).unwrap().d(), 2);
        assert!(c.map(2, 128).is_err());
    }

    #[test]
    fn full_block_with_warp() {
        let v: Value = serde_json::from_str(
            r#"{"alphabet": ["A","B","C"], "pi0": {"A":1,"B":2,"C":3}, "pi1": {"A":2,"B":3,"C":1},
                "lengths": [0.2, 0.5, 0.3], "slopes": [0.2, -0.2, 0.2],
                "warp": {"kind": "moebius", "a": 1.25}}"#,
        )
        .unwrap();
        assert!(build_map(&v, 128).unwrap().fast().is_some());
    }

    #[test]
    fn bad_inputs() {
        assert!(ExperimentConfig::parse(r#"{"tolerances": {"cauchy": 0}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"unknown": 1}"#).is_err());
        let v: Value = serde_json::from_str(r#"{"builtin": "nope"}"#).unwrap();
        assert!(matches!(build_map(&v, 64), Err(CliError::Config(_))));
        let reducible: Value = serde_json::from_str(
            r#"{"pi": {"alphabet": ["A","B"], "pi0": {"A":1,"B":2}, "pi1": {"A":1,"B":2}},
                "lengths": [0.5, 0.5], "slopes": [0, 0]}"#,
        )
        .unwrap();
        assert!(matches!(build_map(&reducible, 64), Err(CliError::Hypothesis(_))));
    }
}
