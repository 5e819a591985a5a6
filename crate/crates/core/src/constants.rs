//! Model parameters, the closed-form constants they determine, and
//! parameter validation.
//!
//! The solenoid contraction is called `lambda` and the slow-down exponent
//! `alpha_slow`; only the isotropic case (equal contraction in both disk
//! directions) is modelled.

use serde::{Deserialize, Serialize};

/// Parameters of the solenoid embedding
/// `F(t, x, y) = (m t, lambda x + eta cos 2 pi t, lambda y + eta sin 2 pi t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolenoidParams {
    /// Degree of the circle map, at least 2.
    pub m: u32,
    /// Common contraction of the disk factor.
    pub lambda: f64,
    /// Radial offset amplitude.
    pub eta: f64,
}

impl Default for SolenoidParams {
    fn default() -> Self {
        Self {
            m: 2,
            lambda: 0.3,
            eta: 0.6,
        }
    }
}

impl SolenoidParams {
    pub fn m_f64(&self) -> f64 {
        f64::from(self.m)
    }

    /// Disk coordinate of the fixed point `(0, eta / (1 - lambda), 0)`.
    pub fn fixed_point_x(&self) -> f64 {
        self.eta / (1.0 - self.lambda)
    }
}

/// Slow-down profile data and chart radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowdownParams {
    /// Exponent of the pure-power profile `psi(r) = r^alpha_slow` near the origin.
    pub alpha_slow: f64,
    /// Radius of the pure-power region.
    pub r0: f64,
    /// Radius of the slow-down ball; `psi = 1` beyond it.
    pub r1: f64,
    /// Radius of the neighbourhood on which the flow replaces the map.
    #[serde(rename = "V_radius")]
    pub v_radius: f64,
    /// Radius of the validated chart domain.
    pub chart_radius: f64,
    /// Requested truncation order of the chart series.
    pub series_k: usize,
}

impl Default for SlowdownParams {
    fn default() -> Self {
        Self {
            alpha_slow: 0.5,
            r0: 0.02,
            r1: 0.04,
            v_radius: 0.14,
            chart_radius: 0.30,
            series_k: 40,
        }
    }
}

/// One checked inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// Human readable form of the required inequality.
    pub inequality: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Converts a failed report into an error naming every violated inequality.
    pub fn into_result(self) -> crate::Result<()> {
        if self.passed() {
            return Ok(());
        }
        let msg = self
            .failures()
            .map(|c| format!("{} ({})", c.name, c.inequality))
            .collect::<Vec<_>>()
            .join("; ");
        Err(crate::Error::InvalidParams(msg))
    }
}

fn check(name: &'static str, passed: bool, inequality: String) -> Check {
    Check {
        name,
        inequality,
        passed,
    }
}

pub fn validate_params(s: &SolenoidParams, d: &SlowdownParams) -> ValidationReport {
    let m = s.m_f64();
    let lam = s.lambda;
    let eta = s.eta;
    let checks = vec![
        check("m >= 2", s.m >= 2, format!("m = {} >= 2", s.m)),
        check(
            "eta in (0,1)",
            eta > 0.0 && eta < 1.0,
            format!("0 < eta = {eta} < 1"),
        ),
        check(
            "lambda < 1/m",
            lam > 0.0 && lam < 1.0 / m,
            format!("0 < lambda = {lam} < 1/m = {}", 1.0 / m),
        ),
        check(
            "lambda < min(eta, 1-eta)",
            lam < eta.min(1.0 - eta),
            format!("lambda = {lam} < min(eta, 1-eta) = {}", eta.min(1.0 - eta)),
        ),
        check(
            "alpha_slow in (0,1)",
            d.alpha_slow > 0.0 && d.alpha_slow < 1.0,
            format!("0 < alpha_slow = {} < 1", d.alpha_slow),
        ),
        check(
            "0 < r0 < r1 < V_radius",
            d.r0 > 0.0 && d.r0 < d.r1 && d.r1 < d.v_radius,
            format!(
                "0 < r0 = {} < r1 = {} < V_radius = {}",
                d.r0, d.r1, d.v_radius
            ),
        ),
        check(
            "m * V_radius <= chart_radius",
            m * d.v_radius <= d.chart_radius,
            format!(
                "m * V_radius = {} <= chart_radius = {}",
                m * d.v_radius,
                d.chart_radius
            ),
        ),
        check(
            "r1 / lambda <= V_radius",
            d.r1 / lam <= d.v_radius,
            format!("r1 / lambda = {} <= V_radius = {}", d.r1 / lam, d.v_radius),
        ),
        check(
            "chart_radius < 1/2",
            d.chart_radius < 0.5,
            format!("chart_radius = {} < 1/2", d.chart_radius),
        ),
        check(
            "series_K >= 4",
            d.series_k >= 4,
            format!("K = {} >= 4", d.series_k),
        ),
    ];
    ValidationReport { checks }
}

/// Every closed-form constant determined by the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Unstable rate `log m`.
    pub gamma: f64,
    /// Stable rate `log(1/lambda)`.
    pub beta: f64,
    pub chi: f64,
    /// Upper separation-growth exponent through the ball.
    pub gamma1: f64,
    /// Lower separation-growth exponent `1 + 1/alpha_slow`.
    pub gamma2: f64,
    /// Upper-bound correlation exponent `1/alpha_slow - 1`.
    pub s1: f64,
    /// Lower-bound correlation exponent `gamma1 - 2`.
    pub s2: f64,
    pub q1_const: f64,
    pub q2_const: f64,
}

pub fn derive_constants(s: &SolenoidParams, d: &SlowdownParams) -> DerivedConstants {
    let a = d.alpha_slow;
    let gamma = s.m_f64().ln();
    let beta = (1.0 / s.lambda).ln();
    let chi = a * (beta - gamma) / 2.0;
    let q1_const = 2.0 / (a * (beta - gamma));
    let q2_const = 2f64.powf(a / 2.0) / (a * gamma);
    let gamma1 = gamma * (a + 1.0) * (q1_const + q2_const);
    let gamma2 = 1.0 + 1.0 / a;
    DerivedConstants {
        gamma,
        beta,
        chi,
        gamma1,
        gamma2,
        s1: 1.0 / a - 1.0,
        s2: gamma1 - 2.0,
        q1_const,
        q2_const,
    }
}

/// Outcome of the lower-bound regime test
/// `(alpha+1) (2 gamma/(beta-gamma) + 2^{alpha/2}) < 2 alpha + 1` with `alpha in (0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub alpha_ok: bool,
    pub inequality_ok: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// The same inequality restated as `gamma1 < gamma2 + 1`.
    pub gamma1_below_gamma2_plus_one: bool,
}

impl RegimeReport {
    pub fn holds(&self) -> bool {
        self.alpha_ok && self.inequality_ok
    }
}

pub fn check_theorem2_regime(c: &DerivedConstants, alpha_slow: f64) -> RegimeReport {
    let a = alpha_slow;
    let lhs = (a + 1.0) * (2.0 * c.gamma / (c.beta - c.gamma) + 2f64.powf(a / 2.0));
    let rhs = 2.0 * a + 1.0;
    RegimeReport {
        alpha_ok: a > 0.0 && a < 0.5,
        inequality_ok: lhs < rhs,
        lhs,
        rhs,
        gamma1_below_gamma2_plus_one: c.gamma1 < c.gamma2 + 1.0,
    }
}

/// Flat JSON object emitted by the `constants` command.
pub fn constants_json(c: &DerivedConstants, regime: &RegimeReport) -> serde_json::Value {
    serde_json::json!({
        "gamma": c.gamma,
        "beta": c.beta,
        "chi": c.chi,
        "gamma1": c.gamma1,
        "gamma2": c.gamma2,
        "s1": c.s1,
        "s2": c.s2,
        "q1_const": c.q1_const,
        "q2_const": c.q2_const,
        "regime_theorem2": regime.holds(),
        "regime_lhs": regime.lhs,
        "regime_rhs": regime.rhs,
    })
}
