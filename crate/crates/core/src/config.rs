//! Flat `key = value` run configuration with dotted keys and `#` comments.

use std::path::Path;

use serde_json::{Map, Value};

use crate::constants::{validate_params, SlowdownParams, SolenoidParams};
use crate::ode::IntegratorConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsConfig {
    pub seed: u64,
    pub burn_in: u64,
    pub orbit_len: u64,
    /// Largest lag of correlation series and largest survival bin.
    pub n_max: usize,
    /// Curve samples behind a return-time tail.
    pub n_samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub min_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub n_trials: usize,
    /// Entry sphere radius; `None` means `r0`.
    pub radius: Option<f64>,
    /// Shortest passage entering the separation fit.
    pub t_min: f64,
    pub n_curves: usize,
    /// Seed segment length relative to its distance from the stable axis.
    pub rel_length: f64,
    /// Shortest passage, in steps, entering the curve-length fit.
    pub k_min: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub solenoid: SolenoidParams,
    pub slowdown: SlowdownParams,
    pub integrator: IntegratorConfig,
    pub stats: StatsConfig,
    pub base_t_lo: f64,
    pub base_t_hi: f64,
    pub fit: FitConfig,
    pub audit: AuditConfig,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            solenoid: SolenoidParams::default(),
            slowdown: SlowdownParams::default(),
            integrator: IntegratorConfig::default(),
            stats: StatsConfig {
                seed: 1,
                burn_in: 10_000,
                orbit_len: 10_000_000,
                n_max: 1000,
                n_samples: 1_000_000,
            },
            base_t_lo: 13.0 / 32.0,
            base_t_hi: 14.0 / 32.0,
            fit: FitConfig {
                n_min: 10,
                n_max: 1000,
                min_count: 100,
            },
            audit: AuditConfig {
                n_trials: 1000,
                radius: None,
                t_min: 10.0,
                n_curves: 100,
                rel_length: 1e-2,
                k_min: 30,
            },
            threads: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl Config {
    /// Parses the text of a configuration file over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            c.set(key.trim(), value.trim())?;
        }
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "solenoid.m" => self.solenoid.m = parse(key, v)?,
            "solenoid.lambda" => self.solenoid.lambda = parse(key, v)?,
            "solenoid.eta" => self.solenoid.eta = parse(key, v)?,
            "slowdown.alpha" => self.slowdown.alpha_slow = parse(key, v)?,
            "slowdown.r0" => self.slowdown.r0 = parse(key, v)?,
            "slowdown.r1" => self.slowdown.r1 = parse(key, v)?,
            "slowdown.V_radius" => self.slowdown.v_radius = parse(key, v)?,
            "chart.K" => self.slowdown.series_k = parse(key, v)?,
            "chart.radius" => self.slowdown.chart_radius = parse(key, v)?,
            "integrator.rel_tol" => self.integrator.rel_tol = parse(key, v)?,
            "integrator.abs_tol" => self.integrator.abs_tol = parse(key, v)?,
            "integrator.max_steps" => self.integrator.max_steps = parse(key, v)?,
            "stats.seed" => self.stats.seed = parse(key, v)?,
            "stats.burn_in" => self.stats.burn_in = parse(key, v)?,
            "stats.orbit_len" => self.stats.orbit_len = parse(key, v)?,
            "stats.n_max" => self.stats.n_max = parse(key, v)?,
            "stats.n_samples" => self.stats.n_samples = parse(key, v)?,
            "base.t_lo" => self.base_t_lo = parse(key, v)?,
            "base.t_hi" => self.base_t_hi = parse(key, v)?,
            "fit.n_min" => self.fit.n_min = parse(key, v)?,
            "fit.n_max" => self.fit.n_max = parse(key, v)?,
            "fit.min_count" => self.fit.min_count = parse(key, v)?,
            "audit.n_trials" => self.audit.n_trials = parse(key, v)?,
            "audit.radius" => self.audit.radius = Some(parse(key, v)?),
            "audit.t_min" => self.audit.t_min = parse(key, v)?,
            "audit.n_curves" => self.audit.n_curves = parse(key, v)?,
            "audit.rel_length" => self.audit.rel_length = parse(key, v)?,
            "audit.k_min" => self.audit.k_min = parse(key, v)?,
            "run.threads" => self.threads = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every resolved key with its value, in file order.
    pub fn resolved(&self) -> Map<String, Value> {
        let entries: Vec<(&str, Value)> = vec![
            ("solenoid.m", self.solenoid.m.into()),
            ("solenoid.lambda", self.solenoid.lambda.into()),
            ("solenoid.eta", self.solenoid.eta.into()),
            ("slowdown.alpha", self.slowdown.alpha_slow.into()),
            ("slowdown.r0", self.slowdown.r0.into()),
            ("slowdown.r1", self.slowdown.r1.into()),
            ("slowdown.V_radius", self.slowdown.v_radius.into()),
            ("chart.K", self.slowdown.series_k.into()),
            ("chart.radius", self.slowdown.chart_radius.into()),
            ("integrator.rel_tol", self.integrator.rel_tol.into()),
            ("integrator.abs_tol", self.integrator.abs_tol.into()),
            ("integrator.max_steps", self.integrator.max_steps.into()),
            ("stats.seed", self.stats.seed.into()),
            ("stats.burn_in", self.stats.burn_in.into()),
            ("stats.orbit_len", self.stats.orbit_len.into()),
            ("stats.n_max", self.stats.n_max.into()),
            ("stats.n_samples", self.stats.n_samples.into()),
            ("base.t_lo", self.base_t_lo.into()),
            ("base.t_hi", self.base_t_hi.into()),
            ("fit.n_min", self.fit.n_min.into()),
            ("fit.n_max", self.fit.n_max.into()),
            ("fit.min_count", self.fit.min_count.into()),
            ("audit.n_trials", self.audit.n_trials.into()),
            ("audit.radius", self.audit_radius().into()),
            ("audit.t_min", self.audit.t_min.into()),
            ("audit.n_curves", self.audit.n_curves.into()),
            ("audit.rel_length", self.audit.rel_length.into()),
            ("audit.k_min", self.audit.k_min.into()),
            ("run.threads", self.threads.into()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn audit_radius(&self) -> f64 {
        self.audit.radius.unwrap_or(self.slowdown.r0)
    }

    /// Model parameters and integrator settings must validate before any
    /// command runs.
    pub fn validate(&self) -> Result<()> {
        validate_params(&self.solenoid, &self.slowdown).into_result()?;
        self.integrator.validate()?;
        if self.fit.n_min >= self.fit.n_max {
            return Err(Error::Config(format!(
                "fit.n_min = {} must be below fit.n_max = {}",
                self.fit.n_min, self.fit.n_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::parse(
            "# comment\nsolenoid.lambda = 0.29  # trailing\n\nslowdown.alpha=0.3\nrun.threads = 4\n",
        )
        .unwrap();
        assert_eq!(c.solenoid.lambda, 0.29);
        assert_eq!(c.slowdown.alpha_slow, 0.3);
        assert_eq!(c.threads, 4);
        assert_eq!(c.solenoid.m, 2);
        assert_eq!(c.audit_radius(), c.slowdown.r0);
        c.validate().unwrap();
    }

    #[test]
    fn every_resolved_key_round_trips() {
        let c = Config::default();
        let text: String = c
            .resolved()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(Config::parse(&text).unwrap().resolved(), c.resolved());
    }

    #[test]
    fn malformed_input_is_a_config_error() {
        for bad in [
            "solenoid.m",
            "nope.key = 1",
            "solenoid.m = two",
            "stats.seed = -1",
        ] {
            assert!(matches!(Config::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn invalid_parameters_fail_validation() {
        let c = Config::parse("solenoid.lambda = 0.6").unwrap();
        assert!(matches!(c.validate(), Err(Error::InvalidParams(_))));
    }
}
