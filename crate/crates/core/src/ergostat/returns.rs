use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{dithered_step, visit_orbit};
use crate::rng::{self, tag};
use crate::slowdown::SlowDownMap;
use crate::solenoid::curve::{grow_unstable_curve, Span, UnstableCurve};
use crate::solenoid::{TorusMap, TorusPoint};
use crate::{Error, Result};

/// Minimum number of steps between the base set and the slow-down ball.
pub const DEFAULT_Q_MIN: u64 = 4;

/// Iterations of the separation check orbit.
const BASE_CHECK_LEN: u64 = 200_000;

/// Cap on the iterations spent growing the curve through the base set.
const CURVE_MAX_ITER: usize = 80;

/// Adjacent-sample spacing on the curve through the base set.
const CURVE_EPS: f64 = 1e-4;

/// Circle interval `[t_lo, t_hi)` used as the inducing base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaseSet {
    pub t_lo: f64,
    pub t_hi: f64,
    pub q_min: u64,
    /// Fewest steps seen from the base into the ball or back.
    pub observed_separation: u64,
}

impl BaseSet {
    #[inline]
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_lo && t < self.t_hi
    }
}

/// Validates `[t_lo, t_hi)` as a base: it must avoid `t = 0` and every
/// orbit segment from it to `B(0, r1)`, or back, must take at least `q_min`
/// steps along a sampled orbit of `g`.
pub fn build_base_set(
    map: &SlowDownMap,
    t_lo: f64,
    t_hi: f64,
    q_min: u64,
    seed: u64,
) -> Result<BaseSet> {
    if !(0.0..1.0).contains(&t_lo) || !(t_lo < t_hi && t_hi <= 1.0) {
        return Err(Error::BadBase(format!(
            "[{t_lo}, {t_hi}) is not a subinterval of [0, 1)"
        )));
    }
    if t_lo == 0.0 {
        return Err(Error::BadBase(
            "interval contains t = 0, the fixed point".into(),
        ));
    }
    let r1 = map.slowdown.r1;
    let base = BaseSet {
        t_lo,
        t_hi,
        q_min,
        observed_separation: u64::MAX,
    };
    let mut last_base: Option<u64> = None;
    let mut last_ball: Option<u64> = None;
    let mut min_gap = u64::MAX;
    visit_orbit(map, seed, 1000, BASE_CHECK_LEN, |i, q| {
        let in_base = base.contains(q.t());
        let in_ball = map.chart_norm(q) < r1;
        if in_base && in_ball {
            min_gap = 0;
        }
        if in_ball {
            if let Some(b) = last_base.take() {
                min_gap = min_gap.min(i - b);
            }
            last_ball = Some(i);
        }
        if in_base {
            if let Some(b) = last_ball.take() {
                min_gap = min_gap.min(i - b);
            }
            last_base = Some(i);
        }
    })?;
    if min_gap < q_min {
        return Err(Error::BadBase(format!(
            "an orbit went between the base and the ball in {min_gap} steps (< {q_min})"
        )));
    }
    Ok(BaseSet {
        observed_separation: min_gap,
        ..base
    })
}

/// Empirical survival function of the first return time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalSeries {
    /// `survivors[n]` samples had `tau > n`, for `n in 0..=n_max`.
    pub survivors: Vec<u64>,
    pub total: u64,
    /// Samples still out of the base after the iteration cap.
    pub censored: u64,
    /// gcd of the uncensored return times.
    pub gcd: u64,
    /// `histogram[n]` samples had `tau = n` for `n <= n_max`; the last entry
    /// counts `tau > n_max`.
    pub histogram: Vec<u64>,
}

impl SurvivalSeries {
    pub fn n_max(&self) -> usize {
        self.survivors.len() - 1
    }

    pub fn p_hat(&self, n: usize) -> f64 {
        self.survivors[n] as f64 / self.total as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.total as f64
    }

    /// Rebuilds the series from a histogram in the layout of `histogram`.
    pub fn from_histogram(histogram: Vec<u64>, censored: u64, gcd: u64) -> Self {
        let total: u64 = histogram.iter().sum();
        let n_max = histogram.len() - 2;
        let mut survivors = vec![0; n_max + 1];
        let mut alive = total;
        for n in 0..=n_max {
            alive -= histogram[n];
            survivors[n] = alive;
        }
        Self {
            survivors,
            total,
            censored,
            gcd,
            histogram,
        }
    }

    /// Writes the CSV `n,survivors,total,p_hat`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,survivors,total,p_hat")?;
        for n in 0..=self.n_max() {
            writeln!(
                w,
                "{n},{},{},{:.17e}",
                self.survivors[n],
                self.total,
                self.p_hat(n)
            )?;
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Tabulates first return times (`None` for censored samples).
pub fn survival_from_times(times: &[Option<u64>], n_max: usize) -> SurvivalSeries {
    let mut histogram = vec![0u64; n_max + 2];
    let mut censored = 0;
    let mut g = 0;
    for t in times {
        match t {
            Some(t) => {
                g = gcd(g, *t);
                histogram[(*t as usize).min(n_max + 1)] += 1;
            }
            None => {
                censored += 1;
                histogram[n_max + 1] += 1;
            }
        }
    }
    SurvivalSeries::from_histogram(histogram, censored, g)
}

/// First return time to the base of `q` under `map` (dithered), or `None`
/// past `cap` iterations.
fn first_return<M: TorusMap + ?Sized>(
    map: &M,
    base: &BaseSet,
    q: &TorusPoint,
    cap: u64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Option<u64>> {
    let mut p = *q;
    for n in 1..=cap {
        p = dithered_step(map, &p, rng).map_err(|e| Error::Orbit {
            step: n,
            source: Box::new(e),
        })?;
        if base.contains(p.t()) {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Unstable curve of `g` crossing the base, grown from an attractor point.
pub fn base_curve(map: &SlowDownMap, base: &BaseSet, seed: u64) -> Result<UnstableCurve> {
    let mut r = rng::substream(seed, tag::CURVE, u64::MAX);
    let v = map.slowdown.v_radius;
    // Grow from a point far from the slow-down region, where g = F.
    let mut q = rng::uniform_torus(&mut r);
    for _ in 0..100 {
        q = dithered_step(map, &q, &mut r)?;
    }
    while map.chart_norm(&q) < 2.0 * v {
        q = dithered_step(map, &q, &mut r)?;
    }
    grow_unstable_curve(
        &q,
        &map.solenoid,
        Span::TInterval(base.t_lo, base.t_hi),
        CURVE_EPS,
        map,
        CURVE_MAX_ITER,
    )
}

/// First return times of `n_samples` points drawn uniformly by arclength on
/// `curve`, capped at `100 n_max` iterations.
pub fn return_times<M: TorusMap + ?Sized>(
    map: &M,
    base: &BaseSet,
    curve: &UnstableCurve,
    n_samples: u64,
    n_max: usize,
    seed: u64,
) -> Result<Vec<Option<u64>>> {
    let cap = 100 * n_max as u64;
    let len = curve.total_length();
    let times: Vec<Result<Option<u64>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, tag::RETURN, i);
            let q = curve.point_at(len * r.random::<f64>());
            first_return(map, base, &q, cap, &mut r)
        })
        .collect();
    times.into_iter().collect()
}

/// Survival function of the first return to `base` for arclength-uniform
/// points on an unstable curve of `g` crossing it.
pub fn estimate_return_tail(
    map: &SlowDownMap,
    base: &BaseSet,
    n_samples: u64,
    n_max: usize,
    seed: u64,
) -> Result<SurvivalSeries> {
    let curve = base_curve(map, base, seed)?;
    let times = return_times(map, base, &curve, n_samples, n_max, seed)?;
    Ok(survival_from_times(&times, n_max))
}
