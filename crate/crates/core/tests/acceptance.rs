//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Thresholds and sample sizes are pinned here, not taken
//! from a config file.

use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use solenoid_core::chart::{
    conjugacy_residual, functional_residual, ChartPoint, SeriesCoefficients,
};
use solenoid_core::constants::{
    check_theorem2_regime, derive_constants, SlowdownParams, SolenoidParams,
};
use solenoid_core::ergostat::{
    build_base_set, bump, estimate_correlations, estimate_return_tail, fit_correlation_decay,
    fit_power_law, observable_by_name, orbit_series, tail_sum_comparison, CorrSeries, PowerLawFit,
    SurvivalSeries, DEFAULT_Q_MIN,
};
use solenoid_core::flowlab::{
    audit_pair_separation, audit_q_bounds, axis_escape_time, axis_position, hitting_time,
};
use solenoid_core::ode::IntegratorConfig;
use solenoid_core::slowdown::{branch_consistency_audit, SlowDownMap};
use solenoid_core::solenoid::Solenoid;

const SEED: u64 = 1;
const BASE_T_LO: f64 = 13.0 / 32.0;
const BASE_T_HI: f64 = 14.0 / 32.0;
const RETURN_SAMPLES: u64 = 1_000_000;
const SURVIVAL_N_MAX: usize = 1000;
const FIT_N_MIN: usize = 10;
const FIT_MIN_COUNT: u64 = 100;
const SLOW_ORBIT_LEN: u64 = 10_000_000;
const BURN_IN: u64 = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }

    fn within(self, elapsed: Duration, limit: Duration) -> Self {
        let ok = elapsed <= limit;
        Self {
            pass: self.pass && ok,
            detail: format!(
                "{}; runtime {:.2} s (limit {} s{})",
                self.detail,
                elapsed.as_secs_f64(),
                limit.as_secs(),
                if ok { "" } else { ", exceeded" }
            ),
        }
    }
}

fn baseline_with(s: SolenoidParams, d: SlowdownParams) -> SlowDownMap {
    SlowDownMap::new(s, d, IntegratorConfig::default()).expect("valid parameters")
}

fn baseline() -> SlowDownMap {
    baseline_with(SolenoidParams::default(), SlowdownParams::default())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let s = SolenoidParams::default();
    let c = match SeriesCoefficients::adaptive(&s, 40, 0.5) {
        Ok(c) => c,
        Err(e) => return Outcome::error(e),
    };
    let (ra, rb) = functional_residual(&c, &s, 10_000);
    let conj = match conjugacy_residual(&c, &s, 10_000, 0.1, SEED) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    Outcome::new(
        ra < 1e-10 && rb < 1e-10 && conj.max_residual < 1e-9,
        format!(
            "functional residual a {ra:.2e}, b {rb:.2e} (< 1e-10); conjugacy {:.2e} on |z| <= 0.1 (< 1e-9)",
            conj.max_residual
        ),
    )
    .within(t.elapsed(), Duration::from_secs(5))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let m = baseline();
    let (a, g, r0) = (m.slowdown.alpha_slow, m.constants.gamma, m.slowdown.r0);
    // The closed form holds while the whole unit-time orbit stays in the pure-power region.
    let u_top = (r0.powf(-a) + a * g).powf(-1.0 / a);
    let mut worst_map: f64 = 0.0;
    for u0 in log_grid(1e-6, u_top, 25) {
        match m.time_one_map(&ChartPoint::new(u0, 0.0, 0.0)) {
            Ok(z) => {
                let exact = axis_position(u0, 1.0, a, g);
                worst_map = worst_map.max((z.u - exact).abs() / exact);
            }
            Err(e) => return Outcome::error(e),
        }
    }
    let mut worst_hit: f64 = 0.0;
    for u0 in log_grid(1e-6, 0.5 * r0, 25) {
        let closed = axis_escape_time(u0, r0, a, g, r0).expect("u0 below r0");
        match hitting_time(&m.flow, &ChartPoint::new(u0, 0.0, 0.0), r0, &m.integrator) {
            Ok(num) => worst_hit = worst_hit.max((num - closed).abs() / closed),
            Err(e) => return Outcome::error(e),
        }
    }
    let anchor = axis_escape_time(1e-4, 0.02, 0.5, std::f64::consts::LN_2, 0.02).expect("anchor");
    Outcome::new(
        worst_map < 1e-8 && worst_hit < 1e-6,
        format!(
            "time-one map rel err {worst_map:.2e} (< 1e-8) on u0 in [1e-6, {u_top:.5}]; escape time rel err \
             {worst_hit:.2e} (< 1e-6); T(1e-4 -> 0.02) = {anchor:.7}"
        ),
    )
    .within(t.elapsed(), Duration::from_secs(10))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    match branch_consistency_audit(&baseline(), 10_000, SEED) {
        Ok(a) => Outcome::new(
            a.max_discrepancy < 1e-8 && a.n_samples >= 10_000,
            format!(
                "max discrepancy {:.2e} over {} samples (< 1e-8)",
                a.max_discrepancy, a.n_samples
            ),
        )
        .within(t.elapsed(), Duration::from_secs(30)),
        Err(e) => Outcome::error(e),
    }
}

/// Lower-bound regime: small contraction forces `r1 <= lambda V_radius`.
fn regime_two_map() -> SlowDownMap {
    let s = SolenoidParams {
        lambda: 1e-6,
        ..SolenoidParams::default()
    };
    let d = SlowdownParams {
        alpha_slow: 0.25,
        r0: 5e-8,
        r1: 1e-7,
        ..SlowdownParams::default()
    };
    baseline_with(s, d)
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, m) in [("baseline", baseline()), ("regime-2", regime_two_map())] {
        match audit_q_bounds(&m, 1000, m.slowdown.r0, SEED) {
            Ok(r) => {
                pass &= r.n_violations == 0 && r.n_trials == 1000;
                parts.push(format!(
                    "{name}: {} violations, worst ratio {:.4}",
                    r.n_violations, r.worst_ratio
                ));
            }
            Err(e) => return Outcome::error(format!("{name}: {e}")),
        }
    }
    Outcome::new(pass, parts.join("; ")).within(t.elapsed(), Duration::from_secs(300))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let m = baseline();
    let (lo, hi) = (0.8 * m.constants.gamma2, 1.2 * m.constants.gamma1);
    match audit_pair_separation(&m, 1000, m.slowdown.r0, 10.0, SEED) {
        Ok(r) => {
            let slope = r.fitted_slope.unwrap_or(f64::NAN);
            Outcome::new(
                (lo..=hi).contains(&slope) && r.n_violations == 0,
                format!(
                    "slope {slope:.3} CI [{:.3}, {:.3}] in [{lo:.3}, {hi:.3}]; {} upper-bound violations",
                    r.slope_ci_lo.unwrap_or(f64::NAN),
                    r.slope_ci_hi.unwrap_or(f64::NAN),
                    r.n_violations
                ),
            )
            .within(t.elapsed(), Duration::from_secs(300))
        }
        Err(e) => Outcome::error(e),
    }
}

struct TailRun {
    survival: SurvivalSeries,
    fit: PowerLawFit,
    elapsed: Duration,
}

fn return_tail(alpha: f64) -> solenoid_core::Result<TailRun> {
    let t = Instant::now();
    let m = baseline_with(
        SolenoidParams::default(),
        SlowdownParams {
            alpha_slow: alpha,
            ..SlowdownParams::default()
        },
    );
    let base = build_base_set(&m, BASE_T_LO, BASE_T_HI, DEFAULT_Q_MIN, SEED)?;
    let survival = estimate_return_tail(&m, &base, RETURN_SAMPLES, SURVIVAL_N_MAX, SEED)?;
    let fit = fit_power_law(&survival, FIT_N_MIN, SURVIVAL_N_MAX, FIT_MIN_COUNT, SEED)?;
    Ok(TailRun {
        survival,
        fit,
        elapsed: t.elapsed(),
    })
}

fn criterion_6(runs: &[(f64, (f64, f64), &solenoid_core::Result<TailRun>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (alpha, (lo, hi), run) in runs {
        match run {
            Ok(r) => {
                let censored = r.survival.censored_fraction();
                let ok = (*lo..=*hi).contains(&r.fit.slope)
                    && censored < 1e-3
                    && r.survival.total >= RETURN_SAMPLES
                    && r.elapsed <= Duration::from_secs(1800);
                pass &= ok;
                parts.push(format!(
                    "alpha {alpha:.4}: slope {:.3} CI [{:.3}, {:.3}] (band [{lo}, {hi}]), censored {censored:.1e}, \
                     {:.1} s",
                    r.fit.slope,
                    r.fit.ci_lo,
                    r.fit.ci_hi,
                    r.elapsed.as_secs_f64()
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("alpha {alpha:.4}: error: {e}"));
            }
        }
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_7(run: &solenoid_core::Result<TailRun>) -> Outcome {
    match run {
        Ok(r) => {
            let observed = r.survival.total - r.survival.censored;
            Outcome::new(
                r.survival.gcd == 1 && observed >= 100_000,
                format!("gcd {} over {observed} observed returns", r.survival.gcd),
            )
        }
        Err(e) => Outcome::error(e),
    }
}

fn criterion_8() -> Outcome {
    let d = SlowdownParams {
        alpha_slow: 0.25,
        ..SlowdownParams::default()
    };
    let cases = [(0.3, false, 4.755_424), (1e-6, true, 1.495_190)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (lambda, expect, lhs) in cases {
        let s = SolenoidParams {
            lambda,
            ..SolenoidParams::default()
        };
        let r = check_theorem2_regime(&derive_constants(&s, &d), d.alpha_slow);
        pass &= r.holds() == expect && (r.lhs - lhs).abs() < 1e-6;
        parts.push(format!(
            "lambda {lambda:e}: holds {} LHS {:.6}",
            r.holds(),
            r.lhs
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_9a() -> Outcome {
    let s = SolenoidParams::default();
    let chart = SeriesCoefficients::adaptive(&s, 40, 0.5).expect("chart");
    let cos = observable_by_name("cos2pit", &chart).expect("builtin");
    let series = match orbit_series(&Solenoid::new(s), SEED, BURN_IN, 1_000_000, &[&cos]) {
        Ok(v) => v,
        Err(e) => return Outcome::error(e),
    };
    match estimate_correlations(&series[0], &series[0], 100) {
        Ok(c) => {
            let z = c.c_hat[20].abs() / c.stderr[20];
            let beyond = (20..=100)
                .filter(|&n| c.c_hat[n].abs() >= 3.0 * c.stderr[n])
                .count();
            Outcome::new(
                z < 3.0 && beyond == 0,
                format!(
                    "cos2pit on F, 10^6 points: |C_20| = {:.2e} = {z:.2} stderr; {beyond} of lags 20..=100 at or \
                     beyond 3 stderr",
                    c.c_hat[20].abs()
                ),
            )
        }
        Err(e) => Outcome::error(e),
    }
}

struct SlowSeries {
    corr: Vec<(u32, CorrSeries)>,
    constant: CorrSeries,
}

fn slowed_correlations() -> solenoid_core::Result<SlowSeries> {
    let m = baseline();
    let ks = [8u32, 16, 32];
    let bumps: Vec<_> = ks.iter().map(|&k| bump(k, &m.chart)).collect();
    let one = observable_by_name("one", &m.chart).expect("builtin");
    let mut refs: Vec<_> = bumps.iter().collect();
    refs.push(&one);
    let series = orbit_series(&m, SEED, BURN_IN, SLOW_ORBIT_LEN, &refs)?;
    let corr = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| Ok((k, estimate_correlations(&series[i], &series[i], 100)?)))
        .collect::<solenoid_core::Result<Vec<_>>>()?;
    let constant = estimate_correlations(&series[3], &series[0], 100)?;
    Ok(SlowSeries { corr, constant })
}

fn criterion_9b(
    slow: &solenoid_core::Result<SlowSeries>,
    tail: &solenoid_core::Result<TailRun>,
) -> Outcome {
    let (slow, tail) = match (slow, tail) {
        (Ok(s), Ok(t)) => (s, t),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, c) in &slow.corr {
        match tail_sum_comparison(c, &tail.survival, &tail.fit, c.mean1, c.mean2, 10, 100) {
            Ok(r) => {
                let lo = r.rho.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = r.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                pass &= lo >= 0.1 && hi <= 10.0;
                parts.push(format!("bump_{k}: rho in [{lo:.2e}, {hi:.2e}]"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("bump_{k}: error: {e}"));
            }
        }
    }
    Outcome::new(
        pass,
        format!("{} (band [0.1, 10], n in [10, 100])", parts.join("; ")),
    )
}

fn criterion_9c(slow: &solenoid_core::Result<SlowSeries>) -> Outcome {
    match slow {
        Ok(s) => {
            let nonzero = s.constant.c_hat.iter().filter(|&&v| v != 0.0).count();
            Outcome::new(
                nonzero == 0,
                format!("{nonzero} nonzero lags of C_n(one, bump_8) over n in 0..=100"),
            )
        }
        Err(e) => Outcome::error(e),
    }
}

fn digest<T: std::fmt::Debug>(v: &T) -> String {
    format!("{:x}", Sha256::digest(format!("{v:?}").as_bytes()))
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
        .install(f)
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let m = baseline();
    let run = || -> solenoid_core::Result<Vec<String>> {
        let base = build_base_set(&m, BASE_T_LO, BASE_T_HI, DEFAULT_Q_MIN, SEED)?;
        let surv = estimate_return_tail(&m, &base, 20_000, 300, SEED)?;
        let fit = fit_power_law(&surv, 2, 100, 20, SEED)?;
        let b = bump(8, &m.chart);
        let series = orbit_series(&m, SEED, 1000, 50_000, &[&b])?;
        let corr = estimate_correlations(&series[0], &series[0], 50)?;
        let cfit = fit_correlation_decay(&corr, 1, 50, SEED).ok();
        let q = audit_q_bounds(&m, 100, m.slowdown.r0, SEED)?;
        Ok(vec![
            digest(&surv),
            digest(&fit),
            digest(&corr),
            digest(&cfit),
            digest(&q.records),
        ])
    };
    let single = with_threads(1, run);
    let multi = with_threads(4, run);
    let (single, multi) = match (single, multi) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    let identical = single == multi;
    let sep = |n| audit_pair_separation(&m, n, m.slowdown.r0, 10.0, SEED).map(|r| r.fitted_slope);
    let shift = match (sep(500), sep(1000)) {
        (Ok(Some(a)), Ok(Some(b))) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    Outcome::new(
        identical && shift < 0.1,
        format!(
            "hashes of survival, fits, correlations and audit records identical on 1 and 4 threads: {identical}; \
             separation slope shift under doubling {shift:.3} (< 0.1); property suites run as their own test target"
        ),
    )
    .within(t.elapsed(), Duration::from_secs(300))
}

fn report(id: &str, title: &str, o: &Outcome) {
    println!(
        "{} [{id}] {title}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() {
    let mut failed = Vec::new();
    let mut record = |id: &'static str, title: &str, o: Outcome| {
        report(id, title, &o);
        if !o.pass {
            failed.push(id);
        }
    };
    record("1", "conjugacy", criterion_1());
    record("2", "integrator oracle", criterion_2());
    record("3", "hybrid consistency", criterion_3());
    record("4", "passage bounds", criterion_4());
    record("5", "separation exponent", criterion_5());
    let half = return_tail(0.5);
    let third = return_tail(1.0 / 3.0);
    record(
        "6",
        "return-time tail",
        criterion_6(&[(0.5, (1.5, 2.5), &half), (1.0 / 3.0, (2.2, 3.8), &third)]),
    );
    record("7", "aperiodic returns", criterion_7(&half));
    record("8", "regime classification", criterion_8());
    record("9a", "unperturbed correlations", criterion_9a());
    let slow = slowed_correlations();
    record("9b", "tail-sum comparison", criterion_9b(&slow, &half));
    record("9c", "constant observable", criterion_9c(&slow));
    if let Ok(s) = &slow {
        for (k, c) in &s.corr {
            match fit_correlation_decay(c, 10, 100, SEED) {
                Ok(f) => println!(
                    "INFO bump_{k} correlation decay exponent {:.3} CI [{:.3}, {:.3}] (upper-bound exponent {:.3})",
                    f.slope,
                    f.ci_lo,
                    f.ci_hi,
                    1.0 / 0.5 - 1.0
                ),
                Err(e) => println!("INFO bump_{k} correlation decay fit: {e}"),
            }
        }
    }
    record("10", "determinism and reproducibility", criterion_10());
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
