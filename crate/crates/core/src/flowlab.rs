//! Passages of slowed trajectories through a ball around the fixed point,
//! closed-form axis oracles, and audits of the trajectory inequalities.

use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::{from_chart, ChartPoint};
use crate::ode::{self, AcceptedStep, Control, IntegratorConfig};
use crate::rng::{self, tag};
use crate::slowdown::{SlowDownMap, SlowFlow};
use crate::solenoid::curve::UnstableCurve;
use crate::stats::{bootstrap_slope_ci, linear_fit};
use crate::{Error, Result};

/// Bisection tolerance for event times.
pub const EVENT_TIME_TOL: f64 = 1e-12;

/// Relative slack before an observation counts as a violation.
pub const SLACK_TOL: f64 = 0.01;

/// Spacing cap between recorded samples along a passage.
pub const SAMPLE_STEP: f64 = 1.0;

/// Time for the axis trajectory `u' = gamma u^(1+alpha)` to grow from `u0`
/// to `r_exit`, valid in the pure-power region.
pub fn axis_escape_time(u0: f64, r_exit: f64, alpha: f64, gamma: f64, r0: f64) -> Result<f64> {
    if r_exit > r0 {
        return Err(Error::DomainError(format!(
            "r_exit = {r_exit} exceeds r0 = {r0}"
        )));
    }
    if !(u0 > 0.0 && u0 <= r_exit) {
        return Err(Error::Precondition(format!(
            "need 0 < u0 <= r_exit (u0 = {u0}, r_exit = {r_exit})"
        )));
    }
    Ok((u0.powf(-alpha) - r_exit.powf(-alpha)) / (alpha * gamma))
}

/// Axis position after time `t`: `(u0^-alpha - alpha gamma t)^(-1/alpha)`.
pub fn axis_position(u0: f64, t: f64, alpha: f64, gamma: f64) -> f64 {
    (u0.powf(-alpha) - alpha * gamma * t).powf(-1.0 / alpha)
}

/// First time the trajectory from `z` (inside the ball) reaches `radius`.
pub fn hitting_time(
    flow: &SlowFlow,
    z: &ChartPoint,
    radius: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let n0 = z.norm();
    if n0 >= radius {
        return Ok(0.0);
    }
    let cfg = cfg.scaled_to(n0);
    let event = |y: &[f64; 3]| (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt() - radius;
    let mut hit = None;
    let mut f = |_: f64, y: &[f64; 3]| flow.field(y);
    let piece = |y: &[f64; 3]| flow.piece_of(y);
    ode::integrate_segmented(f, 0.0, z.to_array(), f64::INFINITY, &cfg, piece, |step| {
        if event(&step.y1) >= 0.0 {
            hit = Some(*step);
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    let step = hit.ok_or(Error::NoExit)?;
    Ok(ode::locate_in_step(&mut f, &step, event, EVENT_TIME_TOL).0)
}

/// A trajectory between entering and leaving the ball of the audit radius.
#[derive(Debug, Clone, Serialize)]
pub struct BallPassage {
    pub entry: ChartPoint,
    pub radius: f64,
    pub exit_time: f64,
    pub exit: ChartPoint,
    /// Time at which `tan theta = 1` (zero when the entry already has `tan theta <= 1`).
    pub t1: f64,
    /// Samples `(time, z)` at accepted steps, including both endpoints.
    pub samples: Vec<(f64, ChartPoint)>,
}

/// `tan theta = |(v, w)| / |u|`.
pub fn tan_theta(z: &ChartPoint) -> f64 {
    z.stable_norm() / z.u.abs()
}

/// Whether the flow at `z` points into the ball around the origin.
pub fn is_inward(z: &ChartPoint, gamma: f64, beta: f64) -> bool {
    gamma * z.u * z.u < beta * (z.v * z.v + z.w * z.w)
}

/// Integrates from `entry` on the sphere of `radius` until the outward
/// crossing of the same sphere.
pub fn compute_passage(map: &SlowDownMap, entry: &ChartPoint, radius: f64) -> Result<BallPassage> {
    let r0 = map.slowdown.r0;
    if radius > r0 {
        return Err(Error::DomainError(format!(
            "audit radius {radius} exceeds the pure-power radius r0 = {r0}"
        )));
    }
    if (entry.norm() - radius).abs() > 1e-9 * radius {
        return Err(Error::Precondition(format!(
            "entry norm {} differs from radius {radius}",
            entry.norm()
        )));
    }
    if entry.u == 0.0 {
        return Err(Error::NoExit);
    }
    let (gamma, beta) = (map.constants.gamma, map.constants.beta);
    let mut passage = BallPassage {
        entry: *entry,
        radius,
        exit_time: 0.0,
        exit: *entry,
        t1: 0.0,
        samples: vec![(0.0, *entry)],
    };
    if !is_inward(entry, gamma, beta) {
        return Ok(passage);
    }
    let flow = &map.flow;
    let cfg = map.integrator.scaled_to(radius).with_max_step(SAMPLE_STEP);
    let exit_event = |y: &[f64; 3]| (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt() - radius;
    let t1_event = |y: &[f64; 3]| y[0].abs() - y[1].hypot(y[2]);
    let mut f = |_: f64, y: &[f64; 3]| flow.field(y);
    let mut steps: Vec<AcceptedStep<3>> = Vec::new();
    let mut exit_step = None;
    let piece = |y: &[f64; 3]| flow.piece_of(y);
    ode::integrate_segmented(
        f,
        0.0,
        entry.to_array(),
        f64::INFINITY,
        &cfg,
        piece,
        |step| {
            steps.push(*step);
            // The first step starts on the sphere heading inward, so any
            // non-negative value at its end means the dip completed inside it.
            if exit_event(&step.y1) >= 0.0 && (steps.len() == 1 || exit_event(&step.y0) < 0.0) {
                exit_step = Some(steps.len() - 1);
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    let k = exit_step.ok_or(Error::NoExit)?;
    let (t_exit, y_exit) = ode::locate_in_step(&mut f, &steps[k], exit_event, EVENT_TIME_TOL);
    passage.exit_time = t_exit;
    passage.exit = ChartPoint::from_array(y_exit);
    if t1_event(&entry.to_array()) < 0.0 {
        let j = steps[..=k]
            .iter()
            .position(|s| t1_event(&s.y1) >= 0.0)
            .unwrap_or(k);
        let (t1, _) = ode::locate_in_step(&mut f, &steps[j], t1_event, EVENT_TIME_TOL);
        passage.t1 = t1.min(t_exit);
    }
    passage.samples.extend(
        steps[..k]
            .iter()
            .map(|s| (s.t1, ChartPoint::from_array(s.y1))),
    );
    passage.samples.push((t_exit, passage.exit));
    Ok(passage)
}

/// One line of an audit CSV.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRecord {
    pub trial: usize,
    pub quantity: &'static str,
    #[serde(rename = "T")]
    pub exit_time: f64,
    pub bound: f64,
    pub observed: f64,
    pub ratio: f64,
    pub violated: bool,
}

impl AuditRecord {
    fn new(
        trial: usize,
        quantity: &'static str,
        exit_time: f64,
        bound: f64,
        observed: f64,
    ) -> Self {
        let ratio = observed / bound;
        Self {
            trial,
            quantity,
            exit_time,
            bound,
            observed,
            ratio,
            violated: ratio > 1.0 + SLACK_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub n_trials: usize,
    pub n_violations: usize,
    pub worst_ratio: f64,
    pub fitted_slope: Option<f64>,
    pub slope_ci_lo: Option<f64>,
    pub slope_ci_hi: Option<f64>,
    #[serde(skip)]
    pub records: Vec<AuditRecord>,
    /// Audit-specific extra summary values.
    #[serde(skip)]
    pub extra: Vec<(&'static str, serde_json::Value)>,
}

impl AuditReport {
    fn from_records(n_trials: usize, records: Vec<AuditRecord>) -> Self {
        let n_violations = records.iter().filter(|r| r.violated).count();
        let worst_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
        Self {
            n_trials,
            n_violations,
            worst_ratio,
            fitted_slope: None,
            slope_ci_lo: None,
            slope_ci_hi: None,
            records,
            extra: Vec::new(),
        }
    }

    fn with_fit(mut self, x: &[f64], y: &[f64], seed: u64) -> Self {
        if let Some(fit) = linear_fit(x, y) {
            let (lo, hi) = bootstrap_slope_ci(x, y, 200, seed);
            self.fitted_slope = Some(fit.slope);
            self.slope_ci_lo = Some(lo);
            self.slope_ci_hi = Some(hi);
        }
        self
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let obj = v.as_object_mut().expect("object");
        for (k, val) in &self.extra {
            obj.insert((*k).to_string(), val.clone());
        }
        v
    }

    /// Writes `trial,quantity,T,bound,observed,ratio,violated`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trial,quantity,T,bound,observed,ratio,violated")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                r.trial, r.quantity, r.exit_time, r.bound, r.observed, r.ratio, r.violated
            )?;
        }
        Ok(())
    }
}

/// Uniform point on the sphere of `radius` restricted to the inward cone with `u > 0`.
pub fn sample_inward_entry<R: Rng>(rng: &mut R, radius: f64, gamma: f64, beta: f64) -> ChartPoint {
    loop {
        let d = rng::unit_sphere(rng);
        let z = ChartPoint::new(radius * d[0].abs(), radius * d[1], radius * d[2]);
        if z.u > 0.0 && is_inward(&z, gamma, beta) {
            return z;
        }
    }
}

/// Inward entry with `u / radius` log-uniform in `[lo, sqrt(beta / (beta + gamma)))`,
/// which spreads passage times over several decades.
pub fn sample_stratified_entry<R: Rng>(
    rng: &mut R,
    radius: f64,
    gamma: f64,
    beta: f64,
    lo: f64,
) -> ChartPoint {
    let hi = (beta / (beta + gamma)).sqrt();
    let c = (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>())
        .exp()
        .min(hi * (1.0 - 1e-9));
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let s = (1.0 - c * c).sqrt();
    ChartPoint::new(radius * c, radius * s * phi.cos(), radius * s * phi.sin())
}

/// Checks the passage estimates
/// `|x|^a <= 1/(R^-a + chi t) <= Q1/(1+t)` for `t <= T1` and
/// `|x|^a <= Q2/(1+T-t)` for `T1 <= t <= T`.
pub fn audit_q_bounds(
    map: &SlowDownMap,
    n_trials: usize,
    audit_radius: f64,
    seed: u64,
) -> Result<AuditReport> {
    if audit_radius > map.slowdown.r0 {
        return Err(Error::DomainError(format!(
            "audit radius {audit_radius} exceeds the pure-power radius r0 = {}",
            map.slowdown.r0
        )));
    }
    let c = map.constants;
    let alpha = map.slowdown.alpha_slow;
    let per_trial: Vec<Result<Vec<AuditRecord>>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::substream(seed, tag::AUDIT, trial as u64);
            let entry = sample_inward_entry(&mut r, audit_radius, c.gamma, c.beta);
            let p = compute_passage(map, &entry, audit_radius)?;
            let (t_exit, t1) = (p.exit_time, p.t1);
            let mut worst = [(0.0f64, 1.0f64, 0.0f64); 3];
            for &(t, z) in &p.samples {
                let obs = z.norm().powf(alpha);
                let mut consider = |i: usize, bound: f64| {
                    if obs / bound > worst[i].0 / worst[i].1 || worst[i].0 == 0.0 {
                        worst[i] = (obs, bound, t);
                    }
                };
                if t <= t1 {
                    consider(0, c.q1_const / (1.0 + t));
                    consider(1, 1.0 / (audit_radius.powf(-alpha) + c.chi * t));
                }
                if t >= t1 {
                    consider(2, c.q2_const / (1.0 + t_exit - t));
                }
            }
            let names = ["Q1", "Q1_sharp", "Q2"];
            Ok(names
                .iter()
                .zip(worst)
                .filter(|(_, w)| w.0 > 0.0)
                .map(|(name, (obs, bound, _))| AuditRecord::new(trial, name, t_exit, bound, obs))
                .collect())
        })
        .collect();
    let mut records = Vec::new();
    for r in per_trial {
        records.extend(r?);
    }
    Ok(AuditReport::from_records(n_trials, records))
}

/// Unit unstable direction at a chart entry point: the image of `e_u` under
/// the flow from the last point of the backward trajectory outside `B(0, r1)`.
pub fn entry_unstable_direction(map: &SlowDownMap, entry: &ChartPoint) -> Result<Vector3<f64>> {
    let flow = &map.flow;
    let r1 = map.slowdown.r1;
    if entry.norm() >= r1 {
        return Ok(Vector3::new(1.0, 0.0, 0.0));
    }
    let cfg = map.integrator.scaled_to(entry.norm());
    let event = |y: &[f64; 3]| (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt() - r1;
    let mut back = |_: f64, y: &[f64; 3]| {
        let f = flow.field(y);
        [-f[0], -f[1], -f[2]]
    };
    let mut hit = None;
    let piece = |y: &[f64; 3]| flow.piece_of(y);
    ode::integrate_segmented(
        back,
        0.0,
        entry.to_array(),
        f64::INFINITY,
        &cfg,
        piece,
        |step| {
            if event(&step.y1) >= 0.0 {
                hit = Some(*step);
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    let step = hit.ok_or(Error::NoExit)?;
    let (tb, zb) = ode::locate_in_step(&mut back, &step, event, EVENT_TIME_TOL);
    let (_, phi) = flow.advance_with_jacobian(&ChartPoint::from_array(zb), tb, &map.integrator)?;
    let v = phi * Vector3::new(1.0, 0.0, 0.0);
    Ok(v / v.norm())
}

/// Separation growth `rho = |D phi_T e| / |e|` for an infinitesimal pair
/// along the unstable direction at entry.
pub fn passage_stretch(map: &SlowDownMap, passage: &BallPassage) -> Result<f64> {
    if passage.exit_time == 0.0 {
        return Ok(1.0);
    }
    let e = entry_unstable_direction(map, &passage.entry)?;
    let (_, phi) =
        map.flow
            .advance_with_jacobian(&passage.entry, passage.exit_time, &map.integrator)?;
    Ok((phi * e).norm())
}

/// Audit of `d(x(T), y(T)) <= (T+1)^gamma1 d(x(0), y(0))` in the limit of
/// infinitesimal separation, with a log-log fit of `rho` against `T+1` over
/// passages with `T >= t_min`.
pub fn audit_pair_separation(
    map: &SlowDownMap,
    n_trials: usize,
    audit_radius: f64,
    t_min: f64,
    seed: u64,
) -> Result<AuditReport> {
    if audit_radius > map.slowdown.r0 {
        return Err(Error::DomainError(format!(
            "audit radius {audit_radius} exceeds the pure-power radius r0 = {}",
            map.slowdown.r0
        )));
    }
    let c = map.constants;
    let results: Vec<Result<(f64, f64)>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::substream(seed, tag::AUDIT, trial as u64);
            let entry = sample_stratified_entry(&mut r, audit_radius, c.gamma, c.beta, 1e-3);
            let p = compute_passage(map, &entry, audit_radius)?;
            Ok((p.exit_time, passage_stretch(map, &p)?))
        })
        .collect();
    let mut records = Vec::with_capacity(n_trials);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (trial, res) in results.into_iter().enumerate() {
        let (t, rho) = res?;
        records.push(AuditRecord::new(
            trial,
            "rho",
            t,
            (t + 1.0).powf(c.gamma1),
            rho,
        ));
        if t >= t_min {
            xs.push((t + 1.0).ln());
            ys.push(rho.ln());
        }
    }
    let mut report = AuditReport::from_records(n_trials, records).with_fit(&xs, &ys, seed);
    report.extra.push(("n_fitted", xs.len().into()));
    Ok(report)
}

/// One curve traced through the slow-down ball.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePassage {
    pub entry_step: usize,
    pub exit_step: usize,
    pub length_in: f64,
    pub length_out: f64,
}

/// Target number of gaps along a traced curve.
const CURVE_SAMPLES: f64 = 256.0;

/// Iterates a short unstable segment just outside `B(0, r1)` under `g`
/// and records its length at the first step any sample is inside the ball
/// and at the first later step all samples are outside.
pub fn trace_curve_through_ball(
    map: &SlowDownMap,
    entry: &ChartPoint,
    rel_length: f64,
    max_steps: usize,
) -> Result<CurvePassage> {
    let pre = map.flow.advance(entry, -1.0, &map.integrator)?;
    // Outside the ball the chart conjugates g to diag(m, lambda, lambda),
    // whose unstable direction is e_u at every point.
    let half = 0.5 * rel_length * pre.u.abs();
    let pts = [-half, 0.0, half]
        .iter()
        .map(|&d| from_chart(&ChartPoint::new(pre.u + d, pre.v, pre.w), &map.chart))
        .collect::<Result<Vec<_>>>()?;
    let mut curve = UnstableCurve::from_points(pts);
    let r1 = map.slowdown.r1;
    let mut entry_step = None;
    let mut length_in = 0.0;
    for step in 0..=max_steps {
        let norms: Vec<f64> = curve.points().iter().map(|q| map.chart_norm(q)).collect();
        match entry_step {
            None if norms.iter().any(|&n| n < r1) => {
                entry_step = Some(step);
                length_in = curve.total_length();
            }
            Some(n) if norms.iter().all(|&v| v >= r1) => {
                return Ok(CurvePassage {
                    entry_step: n,
                    exit_step: step,
                    length_in,
                    length_out: curve.total_length(),
                });
            }
            _ => {}
        }
        // Gaps scale with the curve so the sample count stays bounded.
        let eps = (curve.total_length() / CURVE_SAMPLES).max(half);
        curve = curve.advance(map, eps)?;
    }
    Err(Error::FailedToSpan {
        iterations: max_steps,
    })
}

/// Audit of `C5 k^gamma2 <= l(g^m s)/l(g^n s) <= C6 k^gamma1`, `k = m - n`,
/// with fitted constants and a log-log slope over curves with `k >= k_min`.
pub fn audit_curve_length_through_ball(
    map: &SlowDownMap,
    n_curves: usize,
    rel_length: f64,
    k_min: usize,
    seed: u64,
) -> Result<AuditReport> {
    let c = map.constants;
    let r1 = map.slowdown.r1;
    // The two branches of g agree only up to integration error; tight
    // tolerances keep that seam far below the curve scale.
    let tight = IntegratorConfig {
        rel_tol: 1e-13,
        abs_tol: 1e-13,
        ..map.integrator
    };
    let map = &SlowDownMap {
        integrator: tight,
        ..map.clone()
    };
    let results: Vec<Result<CurvePassage>> = (0..n_curves)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::substream(seed, tag::CURVE, trial as u64);
            let entry = sample_stratified_entry(&mut r, r1, c.gamma, c.beta, 1e-3);
            trace_curve_through_ball(map, &entry, rel_length, 100_000)
        })
        .collect();
    let mut passages = Vec::with_capacity(n_curves);
    for r in results {
        passages.push(r?);
    }
    let ratio = |p: &CurvePassage| p.length_out / p.length_in;
    let k = |p: &CurvePassage| (p.exit_step - p.entry_step) as f64;
    let c5 = passages
        .iter()
        .map(|p| ratio(p) / k(p).powf(c.gamma2))
        .fold(f64::INFINITY, f64::min);
    let c6 = passages
        .iter()
        .map(|p| ratio(p) / k(p).powf(c.gamma1))
        .fold(0.0, f64::max);
    let records: Vec<AuditRecord> = passages
        .iter()
        .enumerate()
        .map(|(i, p)| AuditRecord::new(i, "length_ratio", k(p), c6 * k(p).powf(c.gamma1), ratio(p)))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = passages
        .iter()
        .filter(|p| p.exit_step - p.entry_step >= k_min)
        .map(|p| (k(p).ln(), ratio(p).ln()))
        .unzip();
    let mut report = AuditReport::from_records(n_curves, records).with_fit(&xs, &ys, seed);
    let sandwich = report
        .fitted_slope
        .is_some_and(|s| s >= 0.8 * c.gamma2 && s <= 1.2 * c.gamma1)
        && c5 > 0.0
        && c6.is_finite();
    report.extra.push(("c5", c5.into()));
    report.extra.push(("c6", c6.into()));
    report.extra.push(("sandwich", sandwich.into()));
    report.extra.push(("n_fitted", xs.len().into()));
    Ok(report)
}
