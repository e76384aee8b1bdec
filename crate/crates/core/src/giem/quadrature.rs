//! Gauss–Legendre rules on [0,1].

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

/// Nodes on [0,1] with weights summing to one.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn gauss_legendre(n: usize) -> Rule {
    let gl = GaussLegendre::new(NonZeroUsize::new(n).expect("at least one node"));
    let (nodes, weights) = gl
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .unzip();
    Rule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let r = gauss_legendre(32);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let i: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(63)).sum();
        assert!((i - 1.0 / 64.0).abs() < 1e-15);
    }
}
