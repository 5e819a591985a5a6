use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use super::{CorrSeries, SurvivalSeries};
use crate::rng::{self, tag};
use crate::stats::{percentile_interval, weighted_linear_fit, LinearFit};
use crate::{Error, Result};

/// Fewest samples a survival bin needs to enter a fit.
pub const DEFAULT_MIN_COUNT: u64 = 100;

/// Bootstrap resamples behind every confidence interval.
pub const N_BOOTSTRAP: usize = 200;

/// Fewest usable bins in a fit window.
const MIN_BINS: usize = 5;

/// `log y = intercept - slope log n` over `[n_min, n_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Positive decay exponent.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub n_bins: usize,
}

impl PowerLawFit {
    /// Value of the fitted law at `n`.
    pub fn eval(&self, n: f64) -> f64 {
        (self.intercept - self.slope * n.ln()).exp()
    }
}

/// Usable bins and the weighted log-log fit through them.
fn survival_fit(
    s: &SurvivalSeries,
    n_min: usize,
    n_max: usize,
    min_count: u64,
) -> (usize, Option<LinearFit>) {
    let total = s.total as f64;
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for n in n_min.max(1)..=n_max.min(s.n_max()) {
        let k = s.survivors[n];
        if k < min_count.max(1) {
            continue;
        }
        let p = k as f64 / total;
        x.push((n as f64).ln());
        y.push(p.ln());
        // Inverse squared relative standard error of a binomial proportion.
        w.push(total * p / (1.0 - p).max(1.0 / total));
    }
    let fit = (x.len() >= MIN_BINS)
        .then(|| weighted_linear_fit(&x, &y, &w))
        .flatten();
    (x.len(), fit)
}

/// Multinomial resample of a histogram.
fn resample_histogram(h: &[u64], rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u64> {
    let mut remaining: u64 = h.iter().sum();
    let mut mass = remaining as f64;
    let mut out = Vec::with_capacity(h.len());
    for &c in h {
        let p = if mass > 0.0 {
            (c as f64 / mass).min(1.0)
        } else {
            0.0
        };
        let k = if remaining == 0 || p <= 0.0 {
            0
        } else {
            Binomial::new(remaining, p).map_or(0, |b| b.sample(rng))
        };
        out.push(k);
        remaining -= k;
        mass -= c as f64;
    }
    out
}

/// Weighted log-log fit of the survival function with weights equal to the
/// inverse squared relative standard error of each bin, and a 95% interval
/// from a multinomial bootstrap over samples.
pub fn fit_power_law(
    s: &SurvivalSeries,
    n_min: usize,
    n_max: usize,
    min_count: u64,
    seed: u64,
) -> Result<PowerLawFit> {
    if n_min >= n_max {
        return Err(Error::Precondition(format!(
            "empty fit window [{n_min}, {n_max}]"
        )));
    }
    let (bins, fit) = survival_fit(s, n_min, n_max, min_count);
    let fit = fit.ok_or(Error::WindowTooSparse {
        usable: bins,
        required: MIN_BINS,
    })?;
    let boot: Vec<f64> = (0..N_BOOTSTRAP)
        .filter_map(|b| {
            let mut r = rng::substream(seed, tag::BOOTSTRAP, b as u64);
            let h = resample_histogram(&s.histogram, &mut r);
            let rs = SurvivalSeries::from_histogram(h, s.censored, s.gcd);
            survival_fit(&rs, n_min, n_max, min_count)
                .1
                .map(|f| -f.slope)
        })
        .collect();
    let (ci_lo, ci_hi) = percentile_interval(boot);
    Ok(PowerLawFit {
        slope: -fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        ci_lo,
        ci_hi,
        n_min,
        n_max,
        n_bins: bins,
    })
}

/// Log-log fit of positive correlations weighted by `(c_hat / stderr)^2`,
/// with a pairs bootstrap over lags.
pub fn fit_correlation_decay(
    c: &CorrSeries,
    n_min: usize,
    n_max: usize,
    seed: u64,
) -> Result<PowerLawFit> {
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &n) in c.lags.iter().enumerate() {
        if n < n_min.max(1) || n > n_max || !(c.c_hat[i] > 0.0) || !(c.stderr[i] > 0.0) {
            continue;
        }
        x.push((n as f64).ln());
        y.push(c.c_hat[i].ln());
        w.push((c.c_hat[i] / c.stderr[i]).powi(2));
    }
    let sparse = Error::WindowTooSparse {
        usable: x.len(),
        required: MIN_BINS,
    };
    if x.len() < MIN_BINS {
        return Err(sparse);
    }
    let fit = weighted_linear_fit(&x, &y, &w).ok_or(sparse)?;
    let m = x.len();
    let boot: Vec<f64> = (0..N_BOOTSTRAP)
        .filter_map(|b| {
            let mut r = rng::substream(seed, tag::BOOTSTRAP, b as u64);
            let idx: Vec<usize> = (0..m)
                .map(|_| rand::Rng::random_range(&mut r, 0..m))
                .collect();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            weighted_linear_fit(&pick(&x), &pick(&y), &pick(&w)).map(|f| -f.slope)
        })
        .collect();
    let (ci_lo, ci_hi) = percentile_interval(boot);
    Ok(PowerLawFit {
        slope: -fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        ci_lo,
        ci_hi,
        n_min,
        n_max,
        n_bins: m,
    })
}

/// `rho_n = C_n / (sum_{N > n} p(N) mean1 mean2)` over a lag window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSumComparison {
    pub lags: Vec<usize>,
    pub rho: Vec<f64>,
    /// Fitted estimate of `sum_{N > n_max} p(N)` added to every tail sum.
    pub remainder: f64,
}

/// Compares estimated correlations with tail sums of the return-time
/// survival function; the sum beyond the survival range is taken from the
/// fitted power law.
pub fn tail_sum_comparison(
    c: &CorrSeries,
    s: &SurvivalSeries,
    fit: &PowerLawFit,
    mean1: f64,
    mean2: f64,
    n_min: usize,
    n_max: usize,
) -> Result<TailSumComparison> {
    if !(mean1 * mean2 > 0.0) {
        return Err(Error::ZeroMeans { mean1, mean2 });
    }
    if fit.slope <= 1.0 {
        return Err(Error::Precondition(format!(
            "tail exponent {} <= 1: the tail sum diverges",
            fit.slope
        )));
    }
    let top = s.n_max();
    let remainder = fit.eval(1.0) * (top as f64 + 0.5).powf(1.0 - fit.slope) / (fit.slope - 1.0);
    // tail[n] = sum_{N = n+1}^{top} p(N)
    let mut tail = vec![0.0; top + 1];
    for n in (0..top).rev() {
        tail[n] = tail[n + 1] + s.p_hat(n + 1);
    }
    let (lags, rho): (Vec<usize>, Vec<f64>) = c
        .lags
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= n_min && n <= n_max && n <= top)
        .map(|(i, &n)| (n, c.c_hat[i] / ((tail[n] + remainder) * mean1 * mean2)))
        .unzip();
    if lags.is_empty() {
        return Err(Error::WindowTooSparse {
            usable: 0,
            required: 1,
        });
    }
    Ok(TailSumComparison {
        lags,
        rho,
        remainder,
    })
}
