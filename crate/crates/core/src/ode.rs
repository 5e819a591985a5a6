//! Adaptive Dormand-Prince 8(5,3) integrator on fixed-size states.
//!
//! Error control follows Hairer's DOP853: the 5th and 3rd order embedded
//! estimates are blended and the step is scaled by `err^(-1/8)`. Event
//! location brackets a sign change between accepted steps and bisects on
//! the step length, re-taking a single step from the last accepted state.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub min_step: f64,
    /// Upper bound on a single step; also the spacing of recorded samples.
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_steps: 1_000_000,
            min_step: 1e-12,
            max_step: f64::INFINITY,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "integrator tolerances must be positive (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_steps == 0 || !(self.min_step > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::InvalidParams(
                "integrator step limits must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Copy whose absolute tolerance is no coarser than `rel_tol * scale`.
    pub fn scaled_to(&self, scale: f64) -> Self {
        Self {
            abs_tol: self.abs_tol.min(self.rel_tol * scale),
            ..*self
        }
    }

    pub fn with_max_step(&self, max_step: f64) -> Self {
        Self { max_step, ..*self }
    }
}

const C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [
        5.260_015_195_876_773E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        1.972_505_698_453_79E-2,
        5.917_517_095_361_37E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        2.958_758_547_680_685E-2,
        0.0,
        8.876_275_643_042_054E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        2.413_651_341_592_667E-1,
        0.0,
        -8.845_494_793_282_861E-1,
        9.248_340_032_617_92E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_5E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_6E-1,
        1.254_676_875_668_224_2E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.710_937_5E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_5E-1,
        6.021_653_898_045_596E-2,
        -1.757_812_5E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_8E-1,
        1.072_620_304_463_732_8E-1,
        -1.531_943_774_862_440_2E-2,
        8.273_789_163_814_023E-3,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -8.682_193_468_417_26E-1,
        2.759_209_969_944_671E1,
        2.015_406_755_047_789_4E1,
        -4.348_988_418_106_996E1,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_4E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -5.902_908_268_368_43E-1,
        2.123_005_144_818_119_3E1,
        1.527_923_363_288_242_3E1,
        -3.328_821_096_898_486E1,
        -2.033_120_170_850_862_7E-2,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873E-1,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -1.852_006_565_999_696E1,
        2.273_948_709_935_050_5E1,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
        0.0,
    ],
    [
        2.273_310_147_516_538,
        0.0,
        0.0,
        -1.053_449_546_673_725E1,
        -2.000_872_058_224_862_5,
        -1.795_893_186_311_88E1,
        2.794_888_452_941_996E1,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        1.236_056_717_579_430_3E1,
        6.433_927_460_157_636E-1,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];

const ER: [f64; 12] = [
    1.312_004_499_419_488E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -4.957_589_496_572_502E-1,
    1.664_377_182_454_986_4,
    -3.503_288_487_499_736_6E-1,
    3.341_791_187_130_175E-1,
    8.192_320_648_511_571E-2,
    -2.235_530_786_388_629_4E-2,
];

const BHH: [f64; 3] = [
    2.440_944_881_889_764E-1,
    7.338_466_882_816_118E-1,
    2.205_882_352_941_176_6E-2,
];

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;

/// Result of one trial step.
struct Trial<const N: usize> {
    y: [f64; N],
    /// Scaled error norm; the step is acceptable when `err <= 1`.
    err: f64,
}

/// Takes one DOP853 step of length `h` from `(t, y)` with `k1 = f(t, y)`.
fn trial_step<F, const N: usize>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    cfg: &IntegratorConfig,
) -> Trial<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 12];
    k[0] = *k1;
    for s in 1..12 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y_new = *y;
    let mut err5 = 0.0;
    let mut err3 = 0.0;
    for i in 0..N {
        let mut incr = 0.0;
        let mut e5 = 0.0;
        for s in 0..12 {
            incr += B[s] * k[s][i];
            e5 += ER[s] * k[s][i];
        }
        y_new[i] = y[i] + h * incr;
        let e3 = incr - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
        let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        err5 += (e5 / sk).powi(2);
        err3 += (e3 / sk).powi(2);
    }
    let mut deno = err5 + 0.01 * err3;
    if deno <= 0.0 {
        deno = 1.0;
    }
    let err = h.abs() * err5 * (1.0 / (deno * N as f64)).sqrt();
    Trial { y: y_new, err }
}

/// One unchecked step of length `h`; used for sub-step bisection inside an
/// already accepted step.
pub fn single_step<F, const N: usize>(f: &mut F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if h == 0.0 {
        return *y;
    }
    let k1 = f(t, y);
    let cfg = IntegratorConfig::default();
    trial_step(f, t, y, &k1, h, &cfg).y
}

fn initial_step<F, const N: usize>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    span: f64,
    cfg: &IntegratorConfig,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs();
        dnf += (k1[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(cfg.max_step).min(span);
    let mut y1 = *y;
    for i in 0..N {
        y1[i] += h * k1[i];
    }
    let k2 = f(t + h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs();
        der2 += ((k2[i] - k1[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    (100.0 * h).min(h1).min(cfg.max_step).min(span)
}

/// What an observer wants after seeing an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// An accepted step: the state moved from `(t0, y0)` to `(t1, y1)`.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates from `t0` to `t1 > t0`, calling `observer` after every accepted
/// step. Returns the final time reached (less than `t1` when the observer
/// stops early), the state there, and step statistics.
pub fn integrate_observed<F, O, const N: usize>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<(f64, [f64; N], Stats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&AcceptedStep<N>) -> Control,
{
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0;
    if t1 <= t0 {
        return Ok((t, y, stats));
    }
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, t1 - t0, cfg);
    stats.evaluations += 1;
    let mut last_rejected = false;
    loop {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::BudgetExceeded {
                t,
                max_steps: cfg.max_steps,
            });
        }
        let remaining = t1 - t;
        let hits_end = h >= remaining * (1.0 - 1e-14);
        let h_try = if hits_end { remaining } else { h };
        if !hits_end && h_try < cfg.min_step {
            return Err(Error::StepFailure {
                t,
                min_step: cfg.min_step,
            });
        }
        let trial = trial_step(&mut f, t, &y, &k1, h_try, cfg);
        stats.evaluations += 11;
        let fac11 = trial.err.powf(1.0 / 8.0);
        if trial.err <= 1.0 {
            stats.accepted += 1;
            let t_new = if hits_end { t1 } else { t + h_try };
            let step = AcceptedStep {
                t0: t,
                y0: y,
                t1: t_new,
                y1: trial.y,
            };
            t = t_new;
            y = trial.y;
            if observer(&step) == Control::Stop || hits_end {
                return Ok((t, y, stats));
            }
            k1 = f(t, &y);
            stats.evaluations += 1;
            let fac = (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h_try / fac;
            if last_rejected {
                h_new = h_new.min(h_try);
            }
            h = h_new.min(cfg.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h = h_try / (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

/// Integrates the autonomous or non-autonomous system over `[t0, t1]`.
pub fn integrate<F, const N: usize>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<([f64; N], Stats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let (_, y, stats) = integrate_observed(f, t0, y0, t1, cfg, |_| Control::Continue)?;
    Ok((y, stats))
}

/// Like [`integrate_observed`] for right-hand sides that are only piecewise
/// smooth: whenever an accepted step changes `region(y)`, the crossing is
/// located by bisection and integration restarts there, so no step ever
/// straddles a breakpoint. The observer sees the truncated steps.
pub fn integrate_segmented<F, R, O, const N: usize>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    cfg: &IntegratorConfig,
    region: R,
    mut observer: O,
) -> Result<(f64, [f64; N], Stats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    R: Fn(&[f64; N]) -> u8,
    O: FnMut(&AcceptedStep<N>) -> Control,
{
    let mut total = Stats::default();
    let mut t = t0;
    let mut y = y0;
    loop {
        let budget = IntegratorConfig {
            max_steps: cfg
                .max_steps
                .saturating_sub(total.accepted + total.rejected),
            ..*cfg
        };
        if budget.max_steps == 0 {
            return Err(Error::BudgetExceeded {
                t,
                max_steps: cfg.max_steps,
            });
        }
        let mut crossing = None;
        let (t_end, y_end, stats) = integrate_observed(&mut f, t, y, t1, &budget, |step| {
            if region(&step.y1) != region(&step.y0) {
                crossing = Some(*step);
                return Control::Stop;
            }
            observer(step)
        })?;
        total.accepted += stats.accepted;
        total.rejected += stats.rejected;
        total.evaluations += stats.evaluations;
        match crossing {
            Some(step) => {
                let start = region(&step.y0);
                let (tc, yc) = locate_in_step(
                    &mut f,
                    &step,
                    |y| if region(y) == start { -1.0 } else { 1.0 },
                    BREAKPOINT_TIME_TOL * step.t1.abs().max(1.0),
                );
                let piece = AcceptedStep {
                    t0: step.t0,
                    y0: step.y0,
                    t1: tc,
                    y1: yc,
                };
                if observer(&piece) == Control::Stop {
                    return Ok((tc, yc, total));
                }
                t = tc;
                y = yc;
                if t >= t1 {
                    return Ok((t, y, total));
                }
            }
            None => return Ok((t_end, y_end, total)),
        }
    }
}

/// Relative time resolution for locating breakpoint crossings.
const BREAKPOINT_TIME_TOL: f64 = 1e-14;

/// Locates the first root of `g(t) = event(y(t))` inside an accepted step,
/// given `event(y0) < 0 <= event(y1)`, by bisection on the sub-step length.
pub fn locate_in_step<F, E, const N: usize>(
    f: &mut F,
    step: &AcceptedStep<N>,
    mut event: E,
    time_tol: f64,
) -> (f64, [f64; N])
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    E: FnMut(&[f64; N]) -> f64,
{
    let mut lo = 0.0;
    let mut hi = step.t1 - step.t0;
    let mut y_hi = step.y1;
    while hi - lo > time_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y_mid = single_step(f, step.t0, &step.y0, mid);
        if event(&y_mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y_mid;
        }
    }
    (step.t0 + hi, y_hi)
}
