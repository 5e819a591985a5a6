use rayon::prelude::*;
use serde::Serialize;

use crate::{Error, Result};

/// Block length of the two-level summation used for every orbit sum.
const BLOCK: usize = 4096;

/// Estimated correlation sequence `C_n(h1, h2)` for lags `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrSeries {
    pub lags: Vec<usize>,
    pub c_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mean1: f64,
    pub mean2: f64,
    pub orbit_len: usize,
}

impl CorrSeries {
    /// Writes the CSV `n,c_hat,stderr`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,c_hat,stderr")?;
        for i in 0..self.lags.len() {
            writeln!(
                w,
                "{},{:.17e},{:.17e}",
                self.lags[i], self.c_hat[i], self.stderr[i]
            )?;
        }
        Ok(())
    }
}

/// Sum of `f(k)` for `k < n`, in fixed blocks so the rounding never depends
/// on scheduling.
#[inline]
fn blocked_sum<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let mut s = 0.0;
        for k in start..end {
            s += f(k);
        }
        total += s;
        start = end;
    }
    total
}

/// Mean of `x` taken about its first element; exact for constant `x`.
fn shifted_mean(x: &[f64]) -> f64 {
    let x0 = x[0];
    x0 + blocked_sum(x.len(), |i| x[i] - x0) / x.len() as f64
}

/// `C_n = mean_k (h1[k+n] - m1) (h2[k] - m2)` with
/// window-matched means `m1 = mean(h1[n..])`, `m2 = mean(h2[..K-n])`, and an overlapping-batch-means standard error with
/// batch length `10 n_max`.
pub fn estimate_correlations(h1: &[f64], h2: &[f64], n_max: usize) -> Result<CorrSeries> {
    let k = h1.len();
    if h2.len() != k {
        return Err(Error::Precondition(format!(
            "series lengths differ ({k} vs {})",
            h2.len()
        )));
    }
    if n_max == 0 || k < 10 * n_max {
        return Err(Error::Precondition(format!(
            "orbit length {k} must be at least 10 * n_max = {}",
            10 * n_max
        )));
    }
    let batch = 10 * n_max;
    let per_lag: Vec<(f64, f64)> = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let len = k - n;
            let a = &h1[n..];
            let b = &h2[..len];
            let (m1, m2) = (shifted_mean(a), shifted_mean(b));
            let c = blocked_sum(len, |i| (a[i] - m1) * (b[i] - m2)) / len as f64;
            (
                c,
                batch_means_stderr(len, batch.min(len / 2).max(1), |i| {
                    (a[i] - m1) * (b[i] - m2)
                }),
            )
        })
        .collect();
    Ok(CorrSeries {
        lags: (0..=n_max).collect(),
        c_hat: per_lag.iter().map(|p| p.0).collect(),
        stderr: per_lag.iter().map(|p| p.1).collect(),
        mean1: shifted_mean(h1),
        mean2: shifted_mean(h2),
        orbit_len: k,
    })
}

/// Overlapping batch means estimate of the standard error of `mean(y)`.
fn batch_means_stderr<F: Fn(usize) -> f64>(n: usize, b: usize, y: F) -> f64 {
    let mean = blocked_sum(n, &y) / n as f64;
    let mut window = blocked_sum(b, &y);
    let n_batches = n - b + 1;
    let mut ss = 0.0;
    for j in 0..n_batches {
        if j > 0 {
            window += y(j + b - 1) - y(j - 1);
        }
        let d = window / b as f64 - mean;
        ss += d * d;
    }
    let (nf, bf) = (n as f64, b as f64);
    let var = nf * bf * ss / ((nf - bf) * (nf - bf + 1.0)).max(1.0);
    (var / nf).sqrt()
}
