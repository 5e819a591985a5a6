//! Slow-down of the linear flow `z' = A z`, `A = diag(gamma, -beta, -beta)`,
//! near the fixed point, and the resulting hybrid map `g`.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::Serialize;

use crate::chart::{
    from_chart, from_chart_jacobian, to_chart, to_chart_jacobian, ChartPoint, SeriesCoefficients,
    DEFAULT_HALF_WIDTH,
};
use crate::constants::{
    derive_constants, validate_params, DerivedConstants, SlowdownParams, SolenoidParams,
};
use crate::ode::{self, Control, IntegratorConfig};
use crate::rng::{self, tag};
use crate::solenoid::{apply_f, differential_f, TorusMap, TorusPoint};
use crate::{Error, Result};

/// Grid size used for the monotonicity check of the blend.
pub const PSI_GRID: usize = 10_000;

/// `psi(r) = r^alpha` below `r0`, `1` above `r1`, cubic Hermite in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiProfile {
    pub alpha: f64,
    pub r0: f64,
    pub r1: f64,
    /// `r0^alpha` and `alpha r0^(alpha-1)`: value and slope at `r0`.
    p0: f64,
    m0: f64,
}

impl PsiProfile {
    /// Builds the profile and verifies strict monotonicity of the blend.
    pub fn new(alpha: f64, r0: f64, r1: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0 && r0 > 0.0 && r1 > r0) {
            return Err(Error::InvalidParams(format!(
                "psi profile needs 0 < alpha < 1 and 0 < r0 < r1 (alpha={alpha}, r0={r0}, r1={r1})"
            )));
        }
        let prof = Self {
            alpha,
            r0,
            r1,
            p0: r0.powf(alpha),
            m0: alpha * r0.powf(alpha - 1.0),
        };
        prof.check_monotone(PSI_GRID)?;
        Ok(prof)
    }

    fn check_monotone(&self, n: usize) -> Result<()> {
        let h = self.r1 - self.r0;
        for i in 1..n {
            let r = self.r0 + h * i as f64 / n as f64;
            let d = self.dpsi(r);
            if !(d > 0.0) {
                return Err(Error::NonMonotoneBlend { r, derivative: d });
            }
        }
        Ok(())
    }

    pub fn psi(&self, r: f64) -> f64 {
        if r <= self.r0 {
            r.powf(self.alpha)
        } else if r >= self.r1 {
            1.0
        } else {
            let h = self.r1 - self.r0;
            let s = (r - self.r0) / h;
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * self.p0
                + (s3 - 2.0 * s2 + s) * h * self.m0
                + (-2.0 * s3 + 3.0 * s2)
        }
    }

    /// Derivative of `psi`; one-sided (left) at `r1` and right-sided at `r0`.
    /// Index of the smooth piece containing `r`; `psi''` jumps between pieces.
    pub fn piece(&self, r: f64) -> u8 {
        if r <= self.r0 {
            0
        } else if r < self.r1 {
            1
        } else {
            2
        }
    }

    pub fn dpsi(&self, r: f64) -> f64 {
        if r < self.r0 {
            if r == 0.0 {
                return f64::INFINITY;
            }
            self.alpha * r.powf(self.alpha - 1.0)
        } else if r > self.r1 {
            0.0
        } else {
            let h = self.r1 - self.r0;
            let s = (r - self.r0) / h;
            let s2 = s * s;
            ((6.0 * s2 - 6.0 * s) * self.p0
                + (3.0 * s2 - 4.0 * s + 1.0) * h * self.m0
                + (6.0 * s - 6.0 * s2))
                / h
        }
    }
}

/// Chart-space flow of `psi(|z|) A z`.
#[derive(Debug, Clone, Copy)]
pub struct SlowFlow {
    pub psi: PsiProfile,
    pub gamma: f64,
    pub beta: f64,
}

impl SlowFlow {
    pub fn new(psi: PsiProfile, c: &DerivedConstants) -> Self {
        Self {
            psi,
            gamma: c.gamma,
            beta: c.beta,
        }
    }

    #[inline]
    pub fn field(&self, z: &[f64; 3]) -> [f64; 3] {
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        let p = self.psi.psi(r);
        [
            p * self.gamma * z[0],
            -p * self.beta * z[1],
            -p * self.beta * z[2],
        ]
    }

    /// Jacobian `psi A + psi'(r) (A z)(z / r)^T`.
    pub fn field_jacobian(&self, z: &[f64; 3]) -> Matrix3<f64> {
        let zv = Vector3::new(z[0], z[1], z[2]);
        let r = zv.norm();
        let a = Matrix3::from_diagonal(&Vector3::new(self.gamma, -self.beta, -self.beta));
        if r == 0.0 {
            return Matrix3::zeros();
        }
        let p = self.psi.psi(r);
        let dp = self.psi.dpsi(r);
        a * p + (a * zv) * (zv / r).transpose() * dp
    }

    /// Variational system on `(z, Phi)` with `Phi` stored row-major.
    pub fn variational(&self, y: &[f64; 12]) -> [f64; 12] {
        let z = [y[0], y[1], y[2]];
        let f = self.field(&z);
        let j = self.field_jacobian(&z);
        let phi = Matrix3::from_row_slice(&y[3..12]);
        let dphi = j * phi;
        let mut out = [0.0; 12];
        out[..3].copy_from_slice(&f);
        for r in 0..3 {
            for c in 0..3 {
                out[3 + 3 * r + c] = dphi[(r, c)];
            }
        }
        out
    }

    /// Smooth piece of the field containing the leading three components.
    pub fn piece_of<const N: usize>(&self, y: &[f64; N]) -> u8 {
        self.psi
            .piece((y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt())
    }

    /// Integrates the slowed flow from `z` for time `duration` (negative
    /// durations run the flow backward).
    pub fn advance(
        &self,
        z: &ChartPoint,
        duration: f64,
        cfg: &IntegratorConfig,
    ) -> Result<ChartPoint> {
        let n = z.norm();
        if n == 0.0 || duration == 0.0 {
            return Ok(*z);
        }
        let cfg = cfg.scaled_to(n);
        let (y, _) = if duration > 0.0 {
            let fwd = |_, y: &[f64; 3]| self.field(y);
            let (_, y, st) = ode::integrate_segmented(
                fwd,
                0.0,
                z.to_array(),
                duration,
                &cfg,
                |y| self.piece_of(y),
                |_| Control::Continue,
            )?;
            (y, st)
        } else {
            let back = |_, y: &[f64; 3]| {
                let f = self.field(y);
                [-f[0], -f[1], -f[2]]
            };
            let (_, y, st) = ode::integrate_segmented(
                back,
                0.0,
                z.to_array(),
                -duration,
                &cfg,
                |y| self.piece_of(y),
                |_| Control::Continue,
            )?;
            (y, st)
        };
        Ok(ChartPoint::from_array(y))
    }

    /// Flow together with its derivative with respect to the initial state.
    pub fn advance_with_jacobian(
        &self,
        z: &ChartPoint,
        duration: f64,
        cfg: &IntegratorConfig,
    ) -> Result<(ChartPoint, Matrix3<f64>)> {
        let n = z.norm();
        let mut y0 = [0.0; 12];
        y0[..3].copy_from_slice(&z.to_array());
        y0[3] = 1.0;
        y0[7] = 1.0;
        y0[11] = 1.0;
        if n == 0.0 {
            // The field is C^1 at the origin with zero derivative there.
            return Ok((*z, Matrix3::identity()));
        }
        let cfg = cfg.scaled_to(n.min(1.0));
        let var = |_, y: &[f64; 12]| self.variational(y);
        let (_, y, _) = ode::integrate_segmented(
            var,
            0.0,
            y0,
            duration,
            &cfg,
            |y| self.piece_of(y),
            |_| Control::Continue,
        )?;
        Ok((
            ChartPoint::new(y[0], y[1], y[2]),
            Matrix3::from_row_slice(&y[3..12]),
        ))
    }

    /// Samples `(time, z, psi)` at every accepted step over `[0, duration]`.
    pub fn trajectory(
        &self,
        z: &ChartPoint,
        duration: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Vec<(f64, ChartPoint, f64)>> {
        let n = z.norm();
        let mut out = vec![(0.0, *z, self.psi.psi(n))];
        if n == 0.0 {
            return Ok(out);
        }
        ode::integrate_segmented(
            |_, y: &[f64; 3]| self.field(y),
            0.0,
            z.to_array(),
            duration,
            &cfg.scaled_to(n),
            |y| self.piece_of(y),
            |step| {
                let p = ChartPoint::from_array(step.y1);
                out.push((step.t1, p, self.psi.psi(p.norm())));
                Control::Continue
            },
        )?;
        Ok(out)
    }
}

/// Minimum over `[0, 1]` of the linear-flow norm from `z`, in closed form.
pub fn linear_min_norm(z: &ChartPoint, gamma: f64, beta: f64) -> f64 {
    let u2 = z.u * z.u;
    let s2 = z.v * z.v + z.w * z.w;
    let t_star = if s2 == 0.0 {
        0.0
    } else if u2 == 0.0 {
        1.0
    } else {
        ((beta * s2 / (gamma * u2)).ln() / (2.0 * (gamma + beta))).clamp(0.0, 1.0)
    };
    (u2 * (2.0 * gamma * t_star).exp() + s2 * (-2.0 * beta * t_star).exp()).sqrt()
}

/// All parameters needed by the hybrid map, validated once.
#[derive(Debug, Clone)]
pub struct SlowDownMap {
    pub solenoid: SolenoidParams,
    pub slowdown: SlowdownParams,
    pub constants: DerivedConstants,
    pub chart: SeriesCoefficients,
    pub flow: SlowFlow,
    pub integrator: IntegratorConfig,
}

impl SlowDownMap {
    /// Validates the parameters and builds the chart with adaptive order.
    pub fn new(s: SolenoidParams, d: SlowdownParams, integrator: IntegratorConfig) -> Result<Self> {
        validate_params(&s, &d).into_result()?;
        let chart = SeriesCoefficients::adaptive(&s, d.series_k, DEFAULT_HALF_WIDTH)?;
        Self::with_chart(s, d, integrator, chart)
    }

    /// Uses the given chart coefficients as-is (e.g. a deliberately coarse order).
    pub fn with_chart(
        s: SolenoidParams,
        d: SlowdownParams,
        integrator: IntegratorConfig,
        chart: SeriesCoefficients,
    ) -> Result<Self> {
        validate_params(&s, &d).into_result()?;
        integrator.validate()?;
        let constants = derive_constants(&s, &d);
        let psi = PsiProfile::new(d.alpha_slow, d.r0, d.r1)?;
        Ok(Self {
            solenoid: s,
            slowdown: d,
            constants,
            chart,
            flow: SlowFlow::new(psi, &constants),
            integrator,
        })
    }

    pub fn fixed_point(&self) -> TorusPoint {
        TorusPoint::new_unchecked(0.0, self.solenoid.fixed_point_x(), 0.0)
    }

    /// Chart coordinates of `q` when it lies in the chart domain.
    pub fn chart_of(&self, q: &TorusPoint) -> Option<ChartPoint> {
        to_chart(q, &self.chart).ok()
    }

    /// Chart norm of `q`, `+inf` outside the chart domain.
    pub fn chart_norm(&self, q: &TorusPoint) -> f64 {
        self.chart_of(q).map_or(f64::INFINITY, |z| z.norm())
    }

    /// Whether `q` lies in the neighbourhood `V`.
    pub fn in_v(&self, q: &TorusPoint) -> Option<ChartPoint> {
        self.chart_of(q)
            .filter(|z| z.norm() <= self.slowdown.v_radius)
    }

    /// True when the unit-time linear trajectory from `q` meets the open ball
    /// `B(0, r1)`, i.e. where the slow-down can act in one step.
    pub fn near_ball(&self, q: &TorusPoint) -> bool {
        self.in_v(q).is_some_and(|z| {
            linear_min_norm(&z, self.constants.gamma, self.constants.beta) < self.slowdown.r1
        })
    }

    /// The time-one map of the slowed flow in chart coordinates.
    pub fn time_one_map(&self, z: &ChartPoint) -> Result<ChartPoint> {
        let limit = self.slowdown.chart_radius;
        if self.solenoid.m_f64() * z.norm() > limit {
            return Err(Error::Precondition(format!(
                "time-one map needs m*|z| <= chart_radius ({} > {limit})",
                self.solenoid.m_f64() * z.norm()
            )));
        }
        self.flow.advance(z, 1.0, &self.integrator)
    }

    /// The V-branch of `g`, always integrating the flow.
    pub fn flow_branch(&self, q: &TorusPoint) -> Result<TorusPoint> {
        let z = to_chart(q, &self.chart)?;
        from_chart(&self.time_one_map(&z)?, &self.chart)
    }

    /// The slow-down map: the time-one map in `V`, `F` elsewhere.
    ///
    /// Inside `V`, trajectories whose linear flow never meets `B(0, r1)` see
    /// `psi = 1` throughout, so the time-one map is exactly
    /// `phi^{-1} diag(m, lambda, lambda) phi = F`; those points take `F` directly.
    pub fn apply_g(&self, q: &TorusPoint) -> Result<TorusPoint> {
        match self.in_v(q) {
            Some(z)
                if linear_min_norm(&z, self.constants.gamma, self.constants.beta)
                    < self.slowdown.r1 =>
            {
                from_chart(&self.time_one_map(&z)?, &self.chart)
            }
            _ => Ok(apply_f(q, &self.solenoid)),
        }
    }

    /// Differential of `g` at `q`.
    pub fn differential_g(&self, q: &TorusPoint) -> Result<Matrix3<f64>> {
        match self.in_v(q) {
            Some(z)
                if linear_min_norm(&z, self.constants.gamma, self.constants.beta)
                    < self.slowdown.r1 =>
            {
                let (z1, phi) = self.flow.advance_with_jacobian(&z, 1.0, &self.integrator)?;
                Ok(from_chart_jacobian(z1.u, &self.chart)
                    * phi
                    * to_chart_jacobian(z.u, &self.chart))
            }
            _ => Ok(differential_f(q, &self.solenoid)),
        }
    }
}

impl TorusMap for SlowDownMap {
    fn apply(&self, q: &TorusPoint) -> Result<TorusPoint> {
        self.apply_g(q)
    }

    fn jacobian(&self, q: &TorusPoint) -> Result<Matrix3<f64>> {
        self.differential_g(q)
    }
}

/// Worst disagreement between the flow branch and `F` on the overlap region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchAudit {
    pub n_samples: usize,
    pub max_discrepancy: f64,
    pub worst_point: ChartPoint,
}

/// Samples chart points with `|z| in [r1, V]` whose linear one-step
/// trajectory stays outside `B(0, r1)` and compares both branches of `g`.
pub fn branch_consistency_audit(
    map: &SlowDownMap,
    n_samples: usize,
    seed: u64,
) -> Result<BranchAudit> {
    let d = &map.slowdown;
    let c = &map.constants;
    let mut rng = rng::substream(seed, tag::AUDIT, 0);
    let mut audit = BranchAudit {
        n_samples: 0,
        max_discrepancy: 0.0,
        worst_point: ChartPoint::ORIGIN,
    };
    while audit.n_samples < n_samples {
        let dir = rng::unit_sphere(&mut rng);
        // Radius uniform in volume over the shell [r1, V].
        let (a3, b3) = (d.r1.powi(3), d.v_radius.powi(3));
        let r = (a3 + (b3 - a3) * rng.random::<f64>()).cbrt();
        let z = ChartPoint::new(r * dir[0], r * dir[1], r * dir[2]);
        if linear_min_norm(&z, c.gamma, c.beta) < d.r1 {
            continue;
        }
        let q = from_chart(&z, &map.chart)?;
        let via_flow = map.flow_branch(&q)?;
        let via_f = apply_f(&q, &map.solenoid);
        let gap = via_flow.distance(&via_f);
        if gap > audit.max_discrepancy {
            audit.max_discrepancy = gap;
            audit.worst_point = z;
        }
        audit.n_samples += 1;
    }
    Ok(audit)
}
