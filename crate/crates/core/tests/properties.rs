use proptest::prelude::*;

use solenoid_core::chart::{from_chart, to_chart, ChartPoint, SeriesCoefficients};
use solenoid_core::config::Config;
use solenoid_core::constants::{
    check_theorem2_regime, derive_constants, validate_params, SlowdownParams, SolenoidParams,
};
use solenoid_core::ergostat::{estimate_correlations, fit_power_law, survival_from_times};
use solenoid_core::ode::IntegratorConfig;
use solenoid_core::slowdown::{PsiProfile, SlowDownMap};
use solenoid_core::solenoid::{apply_f, apply_f_inverse, lift_circle, TorusPoint};

fn baseline() -> SlowDownMap {
    SlowDownMap::new(
        SolenoidParams::default(),
        SlowdownParams::default(),
        IntegratorConfig::default(),
    )
    .unwrap()
}

fn torus_point() -> impl Strategy<Value = TorusPoint> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(t, r, a)| {
        let r = 0.999 * r.sqrt();
        TorusPoint::new(t, r * a.cos(), r * a.sin()).unwrap()
    })
}

fn valid_solenoid() -> impl Strategy<Value = SolenoidParams> {
    (2u32..6, 0.05..0.95f64, 0.01..0.99f64).prop_filter_map("lambda bounds", |(m, eta, f)| {
        let cap = (1.0 / f64::from(m)).min(eta).min(1.0 - eta);
        let lambda = f * cap;
        (lambda > 0.0).then_some(SolenoidParams { m, lambda, eta })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derived_constants_keep_their_closed_form_relations(
        s in valid_solenoid(),
        alpha in 0.01..0.99f64,
    ) {
        let d = SlowdownParams { alpha_slow: alpha, ..SlowdownParams::default() };
        let c = derive_constants(&s, &d);
        prop_assert!(c.beta > c.gamma && c.gamma > 0.0);
        prop_assert_eq!(c.gamma2, 1.0 + 1.0 / alpha);
        prop_assert_eq!(c.s1, 1.0 / alpha - 1.0);
        prop_assert!(c.gamma1 > 1.0 + 1.0 / alpha);
        let r = check_theorem2_regime(&c, alpha);
        if r.holds() {
            prop_assert!(r.gamma1_below_gamma2_plus_one);
        }
        prop_assert_eq!(r.inequality_ok, r.gamma1_below_gamma2_plus_one);
        let again = derive_constants(&s, &d);
        prop_assert_eq!(format!("{c:?}"), format!("{again:?}"));
    }

    #[test]
    fn f_traps_the_torus_and_inverts_on_its_image(q in torus_point()) {
        let s = SolenoidParams::default();
        let img = apply_f(&q, &s);
        prop_assert!(img.disk_radius_sq() <= (s.lambda + s.eta).powi(2));
        let back = apply_f_inverse(&img, &s).unwrap();
        prop_assert!(back.distance(&q) < 1e-12);
    }

    #[test]
    fn chart_preserves_the_circle_coordinate(q in torus_point()) {
        let c = SeriesCoefficients::adaptive(&SolenoidParams::default(), 40, 0.5).unwrap();
        if let Ok(z) = to_chart(&q, &c) {
            prop_assert_eq!(z.u, lift_circle(q.t()));
            let back = from_chart(&z, &c).unwrap();
            prop_assert!(back.distance(&q) < 1e-12);
        }
    }

    #[test]
    fn psi_is_monotone_and_bounded(
        alpha in 0.05..0.95f64,
        r0 in 1e-4..0.05f64,
        gap in 1.2..3.0f64,
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
    ) {
        let r1 = gap * r0;
        let Ok(p) = PsiProfile::new(alpha, r0, r1) else { return Ok(()) };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = (lo * 1.5 * r1, hi * 1.5 * r1);
        prop_assert!(p.psi(lo) <= p.psi(hi));
        prop_assert!((0.0..=1.0).contains(&p.psi(hi)));
        prop_assert!(p.dpsi(lo) >= 0.0);
        prop_assert_eq!(p.psi(1.5 * r1), 1.0);
        if lo <= r0 {
            prop_assert!((p.psi(lo) - lo.powf(alpha)).abs() <= 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn g_is_deterministic_and_stays_in_the_torus(q in torus_point()) {
        let m = baseline();
        let a = m.apply_g(&q).unwrap();
        let b = m.apply_g(&q).unwrap();
        prop_assert_eq!(a.t().to_bits(), b.t().to_bits());
        prop_assert_eq!(a.x().to_bits(), b.x().to_bits());
        prop_assert_eq!(a.y().to_bits(), b.y().to_bits());
        prop_assert!(a.disk_radius_sq() < 1.0);
    }

    #[test]
    fn slowed_axis_lags_linear_growth(log_u0 in -13.0..(-3.3f64)) {
        let m = baseline();
        let u0 = log_u0.exp();
        let z = m.time_one_map(&ChartPoint::new(u0, 0.0, 0.0)).unwrap();
        prop_assert!(z.u < 2.0 * u0);
        prop_assert!(z.u > u0);
    }

    #[test]
    fn g_agrees_with_f_outside_the_neighbourhood(q in torus_point()) {
        let m = baseline();
        prop_assume!(m.in_v(&q).is_none());
        let g = m.apply_g(&q).unwrap();
        let f = apply_f(&q, &m.solenoid);
        prop_assert_eq!(g, f);
    }

    #[test]
    fn survival_is_monotone_from_one(
        times in prop::collection::vec(prop::option::weighted(0.95, 1u64..500), 1..400),
    ) {
        let s = survival_from_times(&times, 200);
        prop_assert_eq!(s.p_hat(0), 1.0);
        for n in 1..=s.n_max() {
            prop_assert!(s.p_hat(n) <= s.p_hat(n - 1));
        }
        let censored = times.iter().filter(|t| t.is_none()).count() as u64;
        prop_assert_eq!(s.censored, censored);
    }

    #[test]
    fn constant_observables_have_exactly_zero_correlation(
        c in -1e3..1e3f64,
        x in prop::collection::vec(-1.0..1.0f64, 200..600),
    ) {
        let h = vec![c; x.len()];
        let cs = estimate_correlations(&h, &x, 10).unwrap();
        prop_assert!(cs.c_hat.iter().all(|&v| v == 0.0));
        let cs = estimate_correlations(&x, &h, 10).unwrap();
        prop_assert!(cs.c_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_power_law_survival_is_recovered(s in 0.5..4.0f64) {
        let n_max = 200;
        let scale = (1u64 << 60) as f64;
        // above[n] = #{tau > n} = scale n^-s for n >= 1.
        let above = |n: usize| if n == 0 { scale as u64 } else { (scale * (n as f64).powf(-s)).round() as u64 };
        let mut hist = vec![0u64; n_max + 2];
        for (n, h) in hist.iter_mut().enumerate().take(n_max + 1).skip(1) {
            *h = above(n - 1) - above(n);
        }
        hist[n_max + 1] = above(n_max);
        let series = solenoid_core::ergostat::SurvivalSeries::from_histogram(hist, 0, 1);
        let fit = fit_power_law(&series, 10, n_max, 100, 1).unwrap();
        prop_assert!((fit.slope - s).abs() < 1e-12, "{} vs {}", fit.slope, s);
    }

    #[test]
    fn config_values_round_trip(
        lambda in 0.01..0.29f64,
        seed in any::<u64>(),
        threads in 0usize..64,
    ) {
        let text = format!("solenoid.lambda = {lambda:?}\nstats.seed = {seed}\nrun.threads = {threads}\n");
        let c = Config::parse(&text).unwrap();
        prop_assert_eq!(c.solenoid.lambda, lambda);
        prop_assert_eq!(c.stats.seed, seed);
        let again: String = c.resolved().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        prop_assert_eq!(Config::parse(&again).unwrap().resolved(), c.resolved());
    }
}

#[test]
fn validation_names_each_violated_inequality() {
    let s = SolenoidParams {
        lambda: 0.6,
        ..SolenoidParams::default()
    };
    let d = SlowdownParams {
        r1: 0.01,
        ..SlowdownParams::default()
    };
    let r = validate_params(&s, &d);
    let names: Vec<_> = r.failures().map(|c| c.name).collect();
    assert!(names.contains(&"lambda < 1/m"));
    assert!(names.contains(&"0 < r0 < r1 < V_radius"));
}
