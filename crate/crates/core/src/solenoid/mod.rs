//! The unperturbed solenoid embedding of the solid torus `S^1 x D`.

pub mod curve;

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::SolenoidParams;
use crate::{Error, Result};

/// Residual threshold used to accept an inverse branch.
pub const TOL_BRANCH: f64 = 1e-9;

/// Default number of backward steps for the unstable direction.
pub const UNSTABLE_N_ITER: usize = 60;

/// Reduces `t` into `[0, 1)`.
#[inline]
pub fn reduce_circle(t: f64) -> f64 {
    let r = t.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Lift of a circle coordinate into `(-1/2, 1/2]`.
#[inline]
pub fn lift_circle(t: f64) -> f64 {
    let r = reduce_circle(t);
    if r > 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Signed shortest displacement from `a` to `b` on the circle.
#[inline]
pub fn circle_delta(a: f64, b: f64) -> f64 {
    lift_circle(b - a)
}

/// A point of the solid torus; `t` is stored reduced into `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    t: f64,
    x: f64,
    y: f64,
}

impl TorusPoint {
    pub fn new(t: f64, x: f64, y: f64) -> Result<Self> {
        if !(t.is_finite() && x.is_finite() && y.is_finite()) || x * x + y * y > 1.0 {
            return Err(Error::OutsideTorus { t, x, y });
        }
        Ok(Self {
            t: reduce_circle(t),
            x,
            y,
        })
    }

    /// Builds a point without the disk-membership check (the circle
    /// coordinate is still reduced).
    pub(crate) fn new_unchecked(t: f64, x: f64, y: f64) -> Self {
        Self {
            t: reduce_circle(t),
            x,
            y,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn disk_radius_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// Product-metric distance: circle distance in `t`, Euclidean in the disk.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let dt = circle_delta(self.t, other.t);
        (dt * dt + (self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Point at fraction `s` of the short geodesic segment from `self` to `other`.
    pub fn lerp(&self, other: &TorusPoint, s: f64) -> TorusPoint {
        let dt = circle_delta(self.t, other.t);
        TorusPoint::new_unchecked(
            self.t + s * dt,
            self.x + s * (other.x - self.x),
            self.y + s * (other.y - self.y),
        )
    }

    /// Moves the point along a tangent vector by `step`.
    pub(crate) fn offset(&self, v: &TangentVector, step: f64) -> TorusPoint {
        TorusPoint::new_unchecked(
            self.t + step * v.dt,
            self.x + step * v.dx,
            self.y + step * v.dy,
        )
    }
}

/// Tangent vector at some base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
}

impl TangentVector {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.dt, self.dx, self.dy)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            dt: v[0],
            dx: v[1],
            dy: v[2],
        }
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    /// Angle in `[0, pi/2]` between the lines spanned by two vectors.
    pub fn line_angle(&self, other: &TangentVector) -> f64 {
        let a = self.as_vector();
        let b = other.as_vector();
        let c = (a.dot(&b).abs() / (a.norm() * b.norm())).min(1.0);
        // acos loses accuracy near 0; use the cross product there.
        let s = a.cross(&b).norm() / (a.norm() * b.norm());
        s.atan2(c)
    }
}

/// A map of the solid torus into itself together with its differential.
pub trait TorusMap: Sync {
    fn apply(&self, q: &TorusPoint) -> Result<TorusPoint>;
    fn jacobian(&self, q: &TorusPoint) -> Result<Matrix3<f64>>;
}

pub fn apply_f(q: &TorusPoint, s: &SolenoidParams) -> TorusPoint {
    let (sin, cos) = (TAU * q.t).sin_cos();
    TorusPoint::new_unchecked(
        s.m_f64() * q.t,
        s.lambda * q.x + s.eta * cos,
        s.lambda * q.y + s.eta * sin,
    )
}

pub fn differential_f(q: &TorusPoint, s: &SolenoidParams) -> Matrix3<f64> {
    differential_f_at(q.t, s)
}

/// The differential only depends on the circle coordinate.
pub fn differential_f_at(t: f64, s: &SolenoidParams) -> Matrix3<f64> {
    let (sin, cos) = (TAU * t).sin_cos();
    let k = TAU * s.eta;
    Matrix3::new(
        s.m_f64(),
        0.0,
        0.0, //
        -k * sin,
        s.lambda,
        0.0, //
        k * cos,
        0.0,
        s.lambda,
    )
}

/// Candidate preimage for branch `j` together with its reconstruction residual.
///
/// The disk coordinates are solved from the affine part, projected onto the
/// closed unit disk, and the residual measures how far the projected
/// preimage misses `q` after re-applying `F`.
fn branch_candidate(q: &TorusPoint, s: &SolenoidParams, j: u32) -> (TorusPoint, f64, bool) {
    let m = s.m_f64();
    let tj = (q.t + f64::from(j)) / m;
    let (sin, cos) = (TAU * tj).sin_cos();
    let xp = (q.x - s.eta * cos) / s.lambda;
    let yp = (q.y - s.eta * sin) / s.lambda;
    let r = (xp * xp + yp * yp).sqrt();
    let inside = r <= 1.0;
    let (xc, yc) = if inside { (xp, yp) } else { (xp / r, yp / r) };
    let residual =
        (q.x - s.lambda * xc - s.eta * cos).abs() + (q.y - s.lambda * yc - s.eta * sin).abs();
    (TorusPoint::new_unchecked(tj, xc, yc), residual, inside)
}

/// Branch-resolved inverse of `F` on its image.
pub fn apply_f_inverse(q: &TorusPoint, s: &SolenoidParams) -> Result<TorusPoint> {
    let mut best: Option<(usize, TorusPoint, f64)> = None;
    let mut accepted: Option<usize> = None;
    for j in 0..s.m {
        let (pre, residual, inside) = branch_candidate(q, s, j);
        if inside && residual <= TOL_BRANCH {
            if let Some(first) = accepted {
                return Err(Error::AmbiguousBranch {
                    first,
                    second: j as usize,
                });
            }
            accepted = Some(j as usize);
        }
        if best.as_ref().is_none_or(|b| residual < b.2) {
            best = Some((j as usize, pre, residual));
        }
    }
    let (_, pre, residual) = best.expect("m >= 1");
    if residual > TOL_BRANCH {
        return Err(Error::NotInImage { residual });
    }
    Ok(pre)
}

/// Inverse that never fails: picks the minimum-residual branch and returns
/// its disk-projected preimage. Used for deep backward orbits where rounding
/// is amplified by `1/lambda` per step.
pub fn apply_f_inverse_projected(q: &TorusPoint, s: &SolenoidParams) -> (TorusPoint, f64) {
    (0..s.m)
        .map(|j| {
            let (pre, residual, _) = branch_candidate(q, s, j);
            (pre, residual)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("m >= 1")
}

/// Unit unstable direction at `q`: the push-forward of `(1, 0, 0)` along the
/// differential cocycle from `F^{-n_iter}(q)`, oriented with `dt > 0`.
///
/// The first backward step must be a strict preimage; deeper steps use the
/// projected inverse since their influence decays like `(lambda/m)^k`.
pub fn unstable_direction(
    q: &TorusPoint,
    s: &SolenoidParams,
    n_iter: usize,
) -> Result<TangentVector> {
    let mut ts = Vec::with_capacity(n_iter);
    let mut cur = *q;
    for k in 0..n_iter {
        let pre = if k == 0 {
            apply_f_inverse(&cur, s)?
        } else {
            apply_f_inverse_projected(&cur, s).0
        };
        ts.push(pre.t);
        cur = pre;
    }
    let mut v = Vector3::new(1.0, 0.0, 0.0);
    for &t in ts.iter().rev() {
        v = differential_f_at(t, s) * v;
        v /= v.norm();
    }
    if v[0] < 0.0 {
        v = -v;
    }
    Ok(TangentVector::from_vector(&v))
}

/// The solenoid embedding as a [`TorusMap`].
#[derive(Debug, Clone, Copy)]
pub struct Solenoid {
    pub params: SolenoidParams,
}

impl Solenoid {
    pub fn new(params: SolenoidParams) -> Self {
        Self { params }
    }

    pub fn fixed_point(&self) -> TorusPoint {
        TorusPoint::new_unchecked(0.0, self.params.fixed_point_x(), 0.0)
    }
}

impl TorusMap for Solenoid {
    fn apply(&self, q: &TorusPoint) -> Result<TorusPoint> {
        Ok(apply_f(q, &self.params))
    }

    fn jacobian(&self, q: &TorusPoint) -> Result<Matrix3<f64>> {
        Ok(differential_f(q, &self.params))
    }
}

/// Empirical expansion constants along a sample of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionConstants {
    /// Minimum one-step stretch of the unstable direction outside the ball.
    pub nu_hat: f64,
    /// Maximum operator norm of the differential.
    pub xi_hat: f64,
    pub n_used: usize,
}

/// Estimates `nu` and `xi` along `sample`; points for which `near_ball`
/// returns true are excluded from the `nu` minimum.
pub fn estimate_expansion_constants<M, B>(
    sample: &[TorusPoint],
    s: &SolenoidParams,
    map: &M,
    near_ball: B,
) -> Result<ExpansionConstants>
where
    M: TorusMap + ?Sized,
    B: Fn(&TorusPoint) -> bool,
{
    let mut nu_hat = f64::INFINITY;
    let mut xi_hat: f64 = 0.0;
    let mut n_used = 0;
    for q in sample {
        let j = map.jacobian(q)?;
        let sv = j.singular_values();
        xi_hat = xi_hat.max(sv.max());
        if near_ball(q) {
            continue;
        }
        let v = unstable_direction(q, s, UNSTABLE_N_ITER)?.as_vector();
        nu_hat = nu_hat.min((j * v).norm());
        n_used += 1;
    }
    Ok(ExpansionConstants {
        nu_hat,
        xi_hat,
        n_used,
    })
}
