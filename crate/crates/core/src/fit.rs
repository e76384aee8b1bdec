//! Least-squares fits of decay and growth rates.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RateModel {
    /// `C * lambda^n`
    Exponential,
    /// `C * lambda^sqrt(n)`
    SqrtExponential,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateEstimate {
    pub model: RateModel,
    /// Per-unit rate lambda (per step for the exponential model).
    pub rate: f64,
    pub prefactor: f64,
    /// RMS of the residuals in natural-log scale.
    pub rms: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Set when lambda ≥ 1.
    pub non_decaying: bool,
}

/// Fits `log v_n = log C + x_n log lambda` where `x_n` is `n` or `sqrt n`.
///
/// Non-positive values are dropped. Returns `None` with fewer than two usable points.
pub fn fit(points: &[(usize, f64)], model: RateModel) -> Option<RateEstimate> {
    let pts: Vec<(f64, f64, usize)> = points
        .iter()
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|&(n, v)| {
            let x = match model {
                RateModel::Exponential => n as f64,
                RateModel::SqrtExponential => (n as f64).sqrt(),
            };
            (x, v.ln(), n)
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    let rate = slope.exp();
    Some(RateEstimate {
        model,
        rate,
        prefactor: intercept.exp(),
        rms,
        n_min: pts.iter().map(|p| p.2).min().unwrap(),
        n_max: pts.iter().map(|p| p.2).max().unwrap(),
        non_decaying: rate >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_models() {
        let pts: Vec<_> = (1..40).map(|n| (n, 3.0 * 0.5f64.powf((n as f64).sqrt()))).collect();
        let f = fit(&pts, RateModel::SqrtExponential).unwrap();
        assert!((f.rate - 0.5).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
        assert!(f.rms < 1e-12);
        let pts: Vec<_> = (0..30).map(|n| (n, 1.618f64.powi(n as i32))).collect();
        let f = fit(&pts, RateModel::Exponential).unwrap();
        assert!((f.rate - 1.618).abs() < 1e-12);
        assert!(f.non_decaying);
    }

    #[test]
    fn constant_series_is_flagged() {
        let pts: Vec<_> = (0..10).map(|n| (n, 2.0)).collect();
        let f = fit(&pts, RateModel::SqrtExponential).unwrap();
        assert!((f.rate - 1.0).abs() < 1e-12);
        assert!(f.non_decaying);
    }
}
