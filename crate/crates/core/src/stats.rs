//! Small statistics helpers shared by the audits and estimators.

use rand::Rng;
use serde::Serialize;

use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Weighted least squares `y ~ intercept + slope x`. `None` if fewer than two
/// distinct abscissae carry weight.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    let sw: f64 = w.iter().sum();
    if x.len() < 2 || !(sw > 0.0) {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..x.len())
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    weighted_linear_fit(x, y, &vec![1.0; x.len()])
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[n - 1]
    }
}

/// 95% percentile interval of a sample of bootstrap estimates.
pub fn percentile_interval(mut estimates: Vec<f64>) -> (f64, f64) {
    estimates.retain(|v| v.is_finite());
    estimates.sort_by(f64::total_cmp);
    (
        quantile_sorted(&estimates, 0.025),
        quantile_sorted(&estimates, 0.975),
    )
}

/// Pairs bootstrap of the unweighted slope.
pub fn bootstrap_slope_ci(x: &[f64], y: &[f64], n_resamples: usize, seed: u64) -> (f64, f64) {
    let n = x.len();
    let est: Vec<f64> = (0..n_resamples)
        .filter_map(|b| {
            let mut r = rng::substream(seed, tag::BOOTSTRAP, b as u64);
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let i = r.random_range(0..n);
                xs.push(x[i]);
                ys.push(y[i]);
            }
            linear_fit(&xs, &ys).map(|f| f.slope)
        })
        .collect();
    percentile_interval(est)
}
