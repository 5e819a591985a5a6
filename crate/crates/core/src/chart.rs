//! Linearizing chart near the fixed point: `phi(t, x, y) = (t, x - a(t), y - b(t))`
//! with `a`, `b` the power-series solutions of
//! `a(mt) = lambda a(t) + eta cos(2 pi t)` and `b(mt) = lambda b(t) + eta sin(2 pi t)`.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::constants::SolenoidParams;
use crate::rng::{self, tag};
use crate::solenoid::{apply_f, lift_circle, TorusPoint};
use crate::{Error, Result};

/// Largest accepted truncation tail.
pub const TAIL_TOLERANCE: f64 = 1e-14;

/// Minimum order used by adaptive construction.
pub const K_FLOOR: usize = 40;

/// Default half-width of the chart's circle domain around `t = 0`.
pub const DEFAULT_HALF_WIDTH: f64 = 0.5;

/// Local coordinates centred at the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl ChartPoint {
    pub const ORIGIN: ChartPoint = ChartPoint {
        u: 0.0,
        v: 0.0,
        w: 0.0,
    };

    pub fn new(u: f64, v: f64, w: f64) -> Self {
        Self { u, v, w }
    }

    pub fn from_array(z: [f64; 3]) -> Self {
        Self {
            u: z[0],
            v: z[1],
            w: z[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }

    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }

    /// Norm of the stable component `(v, w)`.
    pub fn stable_norm(&self) -> f64 {
        self.v.hypot(self.w)
    }
}

/// Truncated series for `a` and `b` with an analytic bound on the dropped tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub order: usize,
    pub tail_bound: f64,
    pub half_width: f64,
    m: f64,
}

/// Magnitude `eta (2 pi T)^k / ((m^k - lambda) k!)`, built incrementally.
fn majorants(s: &SolenoidParams, scale: f64, upto: usize) -> Vec<f64> {
    let m = s.m_f64();
    let mut out = Vec::with_capacity(upto + 1);
    let mut p = 1.0; // (2 pi scale)^k / k!
    let mut mk = 1.0;
    for k in 0..=upto {
        if k > 0 {
            p *= TAU * scale / k as f64;
            mk *= m;
        }
        out.push(s.eta * p / (mk - s.lambda));
    }
    out
}

fn tail_bound(s: &SolenoidParams, order: usize, half_width: f64) -> f64 {
    let m = s.m_f64();
    let scale = s.m_f64() * half_width;
    let mut p = 1.0;
    let mut mk = 1.0;
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        if k > 0 {
            p *= TAU * scale / k as f64;
            mk *= m;
        }
        if k > order {
            let term = s.eta * p / (mk - s.lambda);
            sum += term;
            // Terms decrease monotonically once k exceeds 2 pi scale / m.
            if term < 1e-30 && (k as f64) > TAU * scale {
                break;
            }
        }
        k += 1;
    }
    sum
}

impl SeriesCoefficients {
    /// Coefficients of order `order` with the tail reported but not enforced.
    pub fn truncated(s: &SolenoidParams, order: usize, half_width: f64) -> Self {
        let mag = majorants(s, 1.0, order);
        let mut a = vec![0.0; order + 1];
        let mut b = vec![0.0; order + 1];
        for (k, &c) in mag.iter().enumerate() {
            // Signs follow (-1)^{k/2} for even k and (-1)^{(k-1)/2} for odd k.
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                a[k] = sign * c;
            } else {
                b[k] = sign * c;
            }
        }
        Self {
            a,
            b,
            order,
            tail_bound: tail_bound(s, order, half_width),
            half_width,
            m: s.m_f64(),
        }
    }

    /// Adaptive order: starts at `max(order, K_FLOOR)` and raises it until the
    /// tail bound drops below [`TAIL_TOLERANCE`].
    pub fn adaptive(s: &SolenoidParams, order: usize, half_width: f64) -> Result<Self> {
        let mut k = order.max(K_FLOOR);
        loop {
            let c = Self::truncated(s, k, half_width);
            if c.tail_bound <= TAIL_TOLERANCE {
                return Ok(c);
            }
            if k >= 400 {
                return Err(Error::TailTooLarge {
                    bound: c.tail_bound,
                    order: k,
                });
            }
            k += 4;
        }
    }

    /// Largest `|t|` at which the series may be evaluated.
    pub fn eval_limit(&self) -> f64 {
        self.m * self.half_width
    }

    fn check_eval(&self, t: f64) -> Result<()> {
        if t.abs() > self.eval_limit() || !t.is_finite() {
            return Err(Error::OutOfDomain {
                value: t,
                limit: self.eval_limit(),
            });
        }
        Ok(())
    }

    /// Horner evaluation of the truncated `(a(t), b(t))`.
    pub fn eval_ab(&self, t: f64) -> Result<(f64, f64)> {
        self.check_eval(t)?;
        Ok(self.eval_ab_unchecked(t))
    }

    pub(crate) fn eval_ab_unchecked(&self, t: f64) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for k in (0..=self.order).rev() {
            a = a * t + self.a[k];
            b = b * t + self.b[k];
        }
        (a, b)
    }

    /// Derivatives `(a'(t), b'(t))` of the truncated series.
    pub fn eval_ab_prime(&self, t: f64) -> Result<(f64, f64)> {
        self.check_eval(t)?;
        Ok(self.eval_ab_prime_unchecked(t))
    }

    pub(crate) fn eval_ab_prime_unchecked(&self, t: f64) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for k in (1..=self.order).rev() {
            a = a * t + k as f64 * self.a[k];
            b = b * t + k as f64 * self.b[k];
        }
        (a, b)
    }
}

/// Checked construction: errors with `TailTooLarge` when order `k` does not
/// reach the tail tolerance.
pub fn series_coefficients(
    s: &SolenoidParams,
    k: usize,
    half_width: f64,
) -> Result<SeriesCoefficients> {
    if k < 4 {
        return Err(Error::InvalidParams(format!(
            "series order K={k} must be at least 4"
        )));
    }
    let c = SeriesCoefficients::truncated(s, k, half_width);
    if c.tail_bound > TAIL_TOLERANCE {
        return Err(Error::TailTooLarge {
            bound: c.tail_bound,
            order: k,
        });
    }
    Ok(c)
}

pub fn to_chart(q: &TorusPoint, c: &SeriesCoefficients) -> Result<ChartPoint> {
    let u = lift_circle(q.t());
    if u.abs() > c.half_width {
        return Err(Error::OutOfDomain {
            value: u,
            limit: c.half_width,
        });
    }
    let (a, b) = c.eval_ab_unchecked(u);
    Ok(ChartPoint {
        u,
        v: q.x() - a,
        w: q.y() - b,
    })
}

pub fn from_chart(z: &ChartPoint, c: &SeriesCoefficients) -> Result<TorusPoint> {
    let (a, b) = c.eval_ab(z.u)?;
    Ok(TorusPoint::new_unchecked(z.u, z.v + a, z.w + b))
}

/// Jacobian of `to_chart` at `q`, with `u = lift(t)`.
pub fn to_chart_jacobian(u: f64, c: &SeriesCoefficients) -> Matrix3<f64> {
    let (da, db) = c.eval_ab_prime_unchecked(u);
    Matrix3::new(1.0, 0.0, 0.0, -da, 1.0, 0.0, -db, 0.0, 1.0)
}

/// Jacobian of `from_chart` at chart coordinate `u`.
pub fn from_chart_jacobian(u: f64, c: &SeriesCoefficients) -> Matrix3<f64> {
    let (da, db) = c.eval_ab_prime_unchecked(u);
    Matrix3::new(1.0, 0.0, 0.0, da, 1.0, 0.0, db, 0.0, 1.0)
}

/// Worst deviation from the functional equations on an `n`-point grid of `[-hw, hw]`.
pub fn functional_residual(c: &SeriesCoefficients, s: &SolenoidParams, n: usize) -> (f64, f64) {
    let hw = c.half_width;
    let m = s.m_f64();
    let mut worst_a: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for i in 0..n {
        let t = -hw + 2.0 * hw * i as f64 / (n - 1) as f64;
        let (a, b) = c.eval_ab_unchecked(t);
        let (am, bm) = c.eval_ab_unchecked(m * t);
        let (sin, cos) = (TAU * t).sin_cos();
        worst_a = worst_a.max((am - s.lambda * a - s.eta * cos).abs());
        worst_b = worst_b.max((bm - s.lambda * b - s.eta * sin).abs());
    }
    (worst_a, worst_b)
}

/// Result of the conjugacy audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjugacyReport {
    pub max_residual: f64,
    pub argmax: ChartPoint,
    #[serde(rename = "K")]
    pub order: usize,
    pub radius: f64,
}

/// Deviation of `phi . F . phi^{-1}` from `diag(m, lambda, lambda)` at `z`.
pub fn conjugacy_defect(z: &ChartPoint, c: &SeriesCoefficients, s: &SolenoidParams) -> Result<f64> {
    let q = from_chart(z, c)?;
    let img = to_chart(&apply_f(&q, s), c)?;
    let m = s.m_f64();
    let du = lift_circle(img.u - m * z.u);
    let dv = img.v - s.lambda * z.v;
    let dw = img.w - s.lambda * z.w;
    Ok((du * du + dv * dv + dw * dw).sqrt())
}

/// Max conjugacy defect over `n_samples` uniform points of the ball of
/// `radius` (plus the origin).
pub fn conjugacy_residual(
    c: &SeriesCoefficients,
    s: &SolenoidParams,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<ConjugacyReport> {
    let mut rng = rng::substream(seed, tag::CHART, 0);
    let mut report = ConjugacyReport {
        max_residual: conjugacy_defect(&ChartPoint::ORIGIN, c, s)?,
        argmax: ChartPoint::ORIGIN,
        order: c.order,
        radius,
    };
    for _ in 0..n_samples {
        let z = rng::uniform_ball(&mut rng, radius);
        let r = conjugacy_defect(&z, c, s)?;
        if r > report.max_residual {
            report.max_residual = r;
            report.argmax = z;
        }
    }
    Ok(report)
}

/// Numerical Lipschitz bound `1 + max|a'| + max|b'|` on the chart domain.
pub fn lipschitz_bound(c: &SeriesCoefficients, n: usize) -> f64 {
    let hw = c.half_width;
    let (mut da, mut db) = (0.0f64, 0.0f64);
    for i in 0..n {
        let t = -hw + 2.0 * hw * i as f64 / (n - 1) as f64;
        let (a, b) = c.eval_ab_prime_unchecked(t);
        da = da.max(a.abs());
        db = db.max(b.abs());
    }
    1.0 + da + db
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn baseline() -> (SolenoidParams, SeriesCoefficients) {
        let s = SolenoidParams::default();
        let c = series_coefficients(&s, 40, DEFAULT_HALF_WIDTH).unwrap();
        (s, c)
    }

    #[test]
    fn leading_coefficients() {
        let (s, c) = baseline();
        assert_eq!(c.a[0], s.eta / (1.0 - s.lambda));
        assert_abs_diff_eq!(c.a[0], 0.857_142_857, epsilon = 1e-9);
        assert_abs_diff_eq!(c.b[1], 2.217_594_8, epsilon = 1e-7);
        assert_eq!(c.a[1], 0.0);
        assert_eq!(c.b[0], 0.0);
        assert_abs_diff_eq!(c.a[2], -3.200_952_8, epsilon = 1e-7);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn parity_and_alternating_signs() {
        let (s, c) = baseline();
        let mag = majorants(&s, 1.0, c.order);
        for k in 0..=c.order {
            if k % 2 == 0 {
                assert_eq!(c.b[k], 0.0);
                assert_eq!(c.a[k].signum(), if (k / 2) % 2 == 0 { 1.0 } else { -1.0 });
            } else {
                assert_eq!(c.a[k], 0.0);
                assert_eq!(
                    c.b[k].signum(),
                    if ((k - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 }
                );
            }
            assert!(c.a[k].abs() <= mag[k] && c.b[k].abs() <= mag[k]);
        }
    }

    #[test]
    fn tail_bound_at_order_40() {
        let (_, c) = baseline();
        assert!(c.tail_bound < 1e-14, "{}", c.tail_bound);
        let s = SolenoidParams::default();
        assert!(matches!(
            series_coefficients(&s, 6, 0.5),
            Err(Error::TailTooLarge { .. })
        ));
        assert!(SeriesCoefficients::adaptive(&s, 6, 0.5).unwrap().order >= K_FLOOR);
    }

    #[test]
    fn evaluation_domain() {
        let (s, c) = baseline();
        assert_eq!(c.eval_ab(0.0).unwrap(), (s.eta / (1.0 - s.lambda), 0.0));
        assert!(c.eval_ab(1.0).is_ok());
        assert!(matches!(c.eval_ab(1.01), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn functional_equations_hold() {
        let (s, c) = baseline();
        let (ra, rb) = functional_residual(&c, &s, 10_000);
        assert!(ra < 1e-10 && rb < 1e-10, "{ra} {rb}");
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let (_, c) = baseline();
        for i in 0..50 {
            let t = -0.9 + 1.8 * i as f64 / 49.0;
            let (da, db) = c.eval_ab_prime(t).unwrap();
            let h = 1e-6;
            let (ap, bp) = c.eval_ab(t + h).unwrap();
            let (am, bm) = c.eval_ab(t - h).unwrap();
            assert_abs_diff_eq!(da, (ap - am) / (2.0 * h), epsilon = 1e-6);
            assert_abs_diff_eq!(db, (bp - bm) / (2.0 * h), epsilon = 1e-6);
        }
    }

    #[test]
    fn fixed_point_is_chart_origin() {
        let (s, c) = baseline();
        let p = TorusPoint::new(0.0, s.fixed_point_x(), 0.0).unwrap();
        assert_eq!(to_chart(&p, &c).unwrap(), ChartPoint::ORIGIN);
        assert_eq!(from_chart(&ChartPoint::ORIGIN, &c).unwrap(), p);
    }

    #[test]
    fn chart_round_trip_and_exact_first_coordinate() {
        let (_, c) = baseline();
        let mut r = rng::substream(11, 0, 0);
        for _ in 0..10_000 {
            let q = rng::uniform_torus(&mut r);
            let z = to_chart(&q, &c).unwrap();
            assert_eq!(z.u.to_bits(), lift_circle(q.t()).to_bits());
            let back = from_chart(&z, &c).unwrap();
            assert!(back.distance(&q) < 1e-14);
        }
    }

    #[test]
    fn conjugacy_on_small_ball() {
        let (s, c) = baseline();
        assert_eq!(conjugacy_defect(&ChartPoint::ORIGIN, &c, &s).unwrap(), 0.0);
        let rep = conjugacy_residual(&c, &s, 10_000, 0.1, 1).unwrap();
        assert!(rep.max_residual < 1e-10, "{rep:?}");
        let coarse = SeriesCoefficients::truncated(&s, 6, 0.5);
        let rep6 = conjugacy_residual(&coarse, &s, 10_000, 0.1, 1).unwrap();
        assert!(rep6.max_residual > 1e3 * rep.max_residual.max(1e-16));
        assert!(rep6.max_residual > 1e-9);
    }

    #[test]
    fn to_chart_is_lipschitz() {
        let (_, c) = baseline();
        let lip = lipschitz_bound(&c, 2001);
        let mut r = rng::substream(12, 0, 0);
        for _ in 0..1000 {
            let q = rng::uniform_torus(&mut r);
            let h: f64 = 1e-7 * r.random::<f64>();
            let q2 = TorusPoint::new_unchecked(q.t() + h, q.x() - h, q.y() + h);
            let (z1, z2) = (to_chart(&q, &c).unwrap(), to_chart(&q2, &c).unwrap());
            if (z1.u - z2.u).abs() > 0.5 {
                continue;
            }
            let d = ((z1.u - z2.u).powi(2) + (z1.v - z2.v).powi(2) + (z1.w - z2.w).powi(2)).sqrt();
            assert!(d <= lip * q.distance(&q2) * (1.0 + 1e-6));
        }
    }
}
