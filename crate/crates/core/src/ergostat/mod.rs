//! Orbits, observables and the statistics estimated from them: correlation
//! sequences, return-time tails on unstable curves and power-law fits.

mod corr;
mod fit;
mod returns;

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chart::{to_chart, SeriesCoefficients};
use crate::rng::{self, tag};
use crate::solenoid::{TorusMap, TorusPoint};
use crate::{Error, Result};

pub use corr::{estimate_correlations, CorrSeries};
pub use fit::{
    fit_correlation_decay, fit_power_law, tail_sum_comparison, PowerLawFit, TailSumComparison,
    DEFAULT_MIN_COUNT, N_BOOTSTRAP,
};
pub use returns::{
    build_base_set, estimate_return_tail, return_times, survival_from_times, BaseSet,
    SurvivalSeries, DEFAULT_Q_MIN,
};

/// Amplitude of the circle dither applied after every step.
///
/// Without it an `m`-adic circle map in binary floating point loses one bit
/// per step and every orbit lands exactly on `t = 0` within ~53 steps.
pub const DITHER: f64 = 1.0 / (1u64 << 46) as f64;

/// One step of `map` followed by the circle dither drawn from `rng`.
pub fn dithered_step<M: TorusMap + ?Sized>(
    map: &M,
    q: &TorusPoint,
    rng: &mut ChaCha8Rng,
) -> Result<TorusPoint> {
    let p = map.apply(q)?;
    let d = DITHER * (2.0 * rng.random::<f64>() - 1.0);
    Ok(TorusPoint::new_unchecked(p.t() + d, p.x(), p.y()))
}

/// Runs an orbit of `map` from a uniform point of the solid torus, discards
/// `burn_in` steps and hands the next `length` points to `visit`.
pub fn visit_orbit<M, V>(map: &M, seed: u64, burn_in: u64, length: u64, mut visit: V) -> Result<()>
where
    M: TorusMap + ?Sized,
    V: FnMut(u64, &TorusPoint),
{
    if length == 0 {
        return Err(Error::Precondition(
            "orbit length must be at least 1".into(),
        ));
    }
    let mut r = rng::substream(seed, tag::ORBIT, 0);
    let mut q = rng::uniform_torus(&mut r);
    for step in 0..burn_in + length {
        if step >= burn_in {
            visit(step - burn_in, &q);
        }
        q = dithered_step(map, &q, &mut r).map_err(|e| Error::Orbit {
            step,
            source: Box::new(e),
        })?;
    }
    Ok(())
}

/// The orbit points themselves.
pub fn generate_orbit<M: TorusMap + ?Sized>(
    map: &M,
    seed: u64,
    burn_in: u64,
    length: u64,
) -> Result<Vec<TorusPoint>> {
    let mut out = Vec::with_capacity(length as usize);
    visit_orbit(map, seed, burn_in, length, |_, q| out.push(*q))?;
    Ok(out)
}

/// Values of each observable along the orbit, without storing the points.
pub fn orbit_series<M: TorusMap + ?Sized>(
    map: &M,
    seed: u64,
    burn_in: u64,
    length: u64,
    observables: &[&Observable],
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = observables
        .iter()
        .map(|_| Vec::with_capacity(length as usize))
        .collect();
    visit_orbit(map, seed, burn_in, length, |_, q| {
        for (o, col) in observables.iter().zip(out.iter_mut()) {
            col.push(o.eval(q));
        }
    })?;
    Ok(out)
}

/// A named real function on the torus.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    evaluator: Arc<dyn Fn(&TorusPoint) -> f64 + Send + Sync>,
    /// Chart distance from the fixed point below which the value is exactly 0.
    pub support_floor: f64,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("support_floor", &self.support_floor)
            .finish()
    }
}

impl Observable {
    pub fn new<F>(name: impl Into<String>, support_floor: f64, f: F) -> Self
    where
        F: Fn(&TorusPoint) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            evaluator: Arc::new(f),
            support_floor,
        }
    }

    #[inline]
    pub fn eval(&self, q: &TorusPoint) -> f64 {
        (self.evaluator)(q)
    }

    /// Largest `|h(q) - h(q')| / d(q, q')^theta` over random pairs at
    /// distance at most `max_sep`.
    pub fn holder_quotient(&self, theta: f64, n_pairs: usize, max_sep: f64, seed: u64) -> f64 {
        let mut r = rng::substream(seed, tag::AUDIT, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..n_pairs {
            let q = rng::uniform_torus(&mut r);
            let d = rng::unit_sphere(&mut r);
            let len = max_sep * r.random::<f64>();
            let x = q.x() + len * d[1];
            let y = q.y() + len * d[2];
            let Ok(q2) = TorusPoint::new(q.t() + len * d[0], x, y) else {
                continue;
            };
            let dist = q.distance(&q2);
            if dist > 0.0 {
                worst = worst.max((self.eval(&q) - self.eval(&q2)).abs() / dist.powf(theta));
            }
        }
        worst
    }
}

/// `C^infinity` step rising from 0 at `x <= 0` to 1 at `x >= 1`.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Bump vanishing within chart distance `1/k` of the fixed point and equal
/// to 1 beyond `2/k`.
pub fn bump(k: u32, chart: &SeriesCoefficients) -> Observable {
    let chart = chart.clone();
    let inner = 1.0 / f64::from(k);
    Observable::new(format!("bump_{k}"), inner, move |q| {
        let d = to_chart(q, &chart).map_or(f64::INFINITY, |z| z.norm());
        smooth_step((d - inner) / inner)
    })
}

/// `cos2pit`, `xcoord`, `bump_8`, `bump_16`, `bump_32` and `one`.
pub fn builtin_observables(chart: &SeriesCoefficients) -> Vec<Observable> {
    vec![
        Observable::new("cos2pit", 0.0, |q| (TAU * q.t()).cos()),
        Observable::new("xcoord", 0.0, |q| q.x()),
        bump(8, chart),
        bump(16, chart),
        bump(32, chart),
        Observable::new("one", 0.0, |_| 1.0),
    ]
}

/// Looks up a builtin observable by name.
pub fn observable_by_name(name: &str, chart: &SeriesCoefficients) -> Option<Observable> {
    builtin_observables(chart)
        .into_iter()
        .find(|o| o.name == name)
}
