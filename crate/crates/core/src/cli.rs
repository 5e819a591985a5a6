//! Batch front-end: every command resolves a [`Config`], runs inside a
//! worker pool of `run.threads`, writes its outputs plus `manifest.json`
//! and maps the outcome to an exit code.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::chart::{conjugacy_residual, functional_residual, SeriesCoefficients};
use crate::config::Config;
use crate::constants::{check_theorem2_regime, constants_json, derive_constants};
use crate::ergostat::{
    build_base_set, estimate_correlations, estimate_return_tail, fit_correlation_decay,
    fit_power_law, observable_by_name, orbit_series, visit_orbit, DEFAULT_Q_MIN,
};
use crate::flowlab::{audit_curve_length_through_ball, audit_pair_separation, audit_q_bounds};
use crate::slowdown::{branch_consistency_audit, PsiProfile, SlowDownMap};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_STRICT: i32 = 3;

/// Samples behind the conjugacy check.
const CONJUGACY_SAMPLES: usize = 10_000;
/// Radius of the conjugacy check ball.
const CONJUGACY_RADIUS: f64 = 0.1;
/// Grid of the psi profile dump.
const PSI_GRID: usize = 10_000;
/// Overlap samples of the branch audit.
const BRANCH_SAMPLES: usize = 10_000;
/// Default `--strict` thresholds.
const STRICT_CONJUGACY: f64 = 1e-9;
const STRICT_BRANCH: f64 = 1e-8;
/// Censored fraction above which the return tail warns.
const CENSOR_WARN: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "solenoid", version, about = "Slowed-down solenoid laboratory")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Exit 3 when an audit exceeds its threshold (optionally given).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "NaN")]
    pub strict: Option<f64>,
    /// Overrides `stats.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived constants as JSON.
    Constants {
        #[arg(long)]
        check_regime: bool,
    },
    /// Chart conjugacy residuals.
    ConjugacyCheck,
    /// One of the trajectory audits.
    Audit { which: AuditKind },
    /// Correlation sequence of two builtin observables.
    Correlations { h1: String, h2: String },
    /// Survival function of base return times.
    ReturnTail,
    /// Orbit of the slow-down map.
    Orbit {
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditKind {
    Psi,
    Branch,
    Qbounds,
    Separation,
    Curvelen,
}

/// Exit code for a library error: configuration problems are usage errors,
/// everything else is a numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_)
        | Error::Config(_)
        | Error::BadBase(_)
        | Error::Precondition(_)
        | Error::DomainError(_)
        | Error::NonMonotoneBlend { .. }
        | Error::OutsideTorus { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Collects output files and writes the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> std::io::Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        {
            let mut w = BufWriter::new(fs::File::create(&path)?);
            f(&mut w)?;
            w.flush()?;
        }
        let hash = Sha256::digest(fs::read(&path)?);
        self.files.push((name.to_string(), hex::encode(hash)));
        Ok(())
    }

    fn write_json(&mut self, name: &str, v: &Value) -> std::io::Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v)?;
            writeln!(w)
        })
    }

    fn finish(self, command: &str, cfg: &Config) -> std::io::Result<()> {
        let outputs: serde_json::Map<String, Value> = self
            .files
            .into_iter()
            .map(|(k, v)| (k, Value::String(v)))
            .collect();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg.resolved(),
            "outputs": outputs,
        });
        let mut w = BufWriter::new(fs::File::create(self.dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)
    }
}

enum Failure {
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    let mut cfg = match &cli.config {
        Some(p) => match Config::from_file(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.stats.seed = seed;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli, &cfg)) {
        Ok(code) => code,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn strict_threshold(cli: &Cli, default: f64) -> Option<f64> {
    cli.strict.map(|t| if t.is_nan() { default } else { t })
}

fn print_json(v: &Value) {
    // A closed stdout must not turn a finished run into a failure.
    let _ = writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(v).unwrap_or_default()
    );
}

fn dispatch(cli: &Cli, cfg: &Config) -> CmdResult {
    let mut out = Outputs::new(&cli.out)?;
    let (name, code) = match &cli.command {
        Command::Constants { check_regime } => {
            ("constants", cmd_constants(cfg, *check_regime, &mut out)?)
        }
        Command::ConjugacyCheck => ("conjugacy-check", cmd_conjugacy(cli, cfg, &mut out)?),
        Command::Audit { which } => ("audit", cmd_audit(cli, cfg, *which, &mut out)?),
        Command::Correlations { h1, h2 } => {
            ("correlations", cmd_correlations(cfg, h1, h2, &mut out)?)
        }
        Command::ReturnTail => ("return-tail", cmd_return_tail(cfg, &mut out)?),
        Command::Orbit { dump } => ("orbit", cmd_orbit(cfg, *dump, &mut out)?),
    };
    out.finish(name, cfg)?;
    Ok(code)
}

fn slow_map(cfg: &Config) -> crate::Result<SlowDownMap> {
    SlowDownMap::new(cfg.solenoid, cfg.slowdown, cfg.integrator)
}

fn cmd_constants(cfg: &Config, check_regime: bool, out: &mut Outputs) -> CmdResult {
    let c = derive_constants(&cfg.solenoid, &cfg.slowdown);
    let regime = check_theorem2_regime(&c, cfg.slowdown.alpha_slow);
    let mut v = constants_json(&c, &regime);
    if !check_regime {
        if let Some(o) = v.as_object_mut() {
            o.retain(|k, _| !k.starts_with("regime_"));
        }
    }
    out.write_json("constants.json", &v)?;
    print_json(&v);
    Ok(EXIT_OK)
}

fn cmd_conjugacy(cli: &Cli, cfg: &Config, out: &mut Outputs) -> CmdResult {
    let chart = SeriesCoefficients::truncated(
        &cfg.solenoid,
        cfg.slowdown.series_k,
        crate::chart::DEFAULT_HALF_WIDTH,
    );
    let (ra, rb) = functional_residual(&chart, &cfg.solenoid, CONJUGACY_SAMPLES);
    let rep = conjugacy_residual(
        &chart,
        &cfg.solenoid,
        CONJUGACY_SAMPLES,
        CONJUGACY_RADIUS,
        cfg.stats.seed,
    )?;
    let v = json!({
        "K": chart.order,
        "tail_bound": chart.tail_bound,
        "functional_residual_a": ra,
        "functional_residual_b": rb,
        "max_residual": rep.max_residual,
        "argmax": [rep.argmax.u, rep.argmax.v, rep.argmax.w],
        "radius": rep.radius,
    });
    out.write_json("conjugacy.json", &v)?;
    print_json(&v);
    let fail =
        strict_threshold(cli, STRICT_CONJUGACY).is_some_and(|tol| !(rep.max_residual <= tol));
    Ok(if fail { EXIT_STRICT } else { EXIT_OK })
}

fn cmd_audit(cli: &Cli, cfg: &Config, which: AuditKind, out: &mut Outputs) -> CmdResult {
    let seed = cfg.stats.seed;
    let (summary, violated) = match which {
        AuditKind::Psi => {
            let d = &cfg.slowdown;
            let p = PsiProfile::new(d.alpha_slow, d.r0, d.r1)?;
            let r_max = 2.0 * d.r1;
            out.write_with("audit_psi.csv", |w| {
                writeln!(w, "r,psi,dpsi")?;
                for i in 0..=PSI_GRID {
                    let r = r_max * i as f64 / PSI_GRID as f64;
                    writeln!(w, "{r:.17e},{:.17e},{:.17e}", p.psi(r), p.dpsi(r))?;
                }
                Ok(())
            })?;
            let eps = 1e-12 * d.r0;
            let jump = |r: f64| {
                (
                    (p.psi(r + eps) - p.psi(r - eps)).abs(),
                    (p.dpsi(r + eps) - p.dpsi(r - eps)).abs(),
                )
            };
            let (v0, d0) = jump(d.r0);
            let (v1, d1) = jump(d.r1);
            let v = json!({
                "alpha": d.alpha_slow, "r0": d.r0, "r1": d.r1,
                "monotone": true,
                "value_jump_r0": v0, "slope_jump_r0": d0,
                "value_jump_r1": v1, "slope_jump_r1": d1,
                "n_violations": 0,
            });
            (v, false)
        }
        AuditKind::Branch => {
            let m = slow_map(cfg)?;
            let a = branch_consistency_audit(&m, BRANCH_SAMPLES, seed)?;
            let v = json!({
                "n_samples": a.n_samples,
                "max_discrepancy": a.max_discrepancy,
                "worst_point": [a.worst_point.u, a.worst_point.v, a.worst_point.w],
            });
            let tol = strict_threshold(cli, STRICT_BRANCH).unwrap_or(STRICT_BRANCH);
            (v, !(a.max_discrepancy < tol))
        }
        AuditKind::Qbounds | AuditKind::Separation | AuditKind::Curvelen => {
            let m = slow_map(cfg)?;
            let a = &cfg.audit;
            let (name, report) = match which {
                AuditKind::Qbounds => (
                    "qbounds",
                    audit_q_bounds(&m, a.n_trials, cfg.audit_radius(), seed)?,
                ),
                AuditKind::Separation => (
                    "separation",
                    audit_pair_separation(&m, a.n_trials, cfg.audit_radius(), a.t_min, seed)?,
                ),
                _ => (
                    "curvelen",
                    audit_curve_length_through_ball(&m, a.n_curves, a.rel_length, a.k_min, seed)?,
                ),
            };
            out.write_with(&format!("audit_{name}.csv"), |w| report.write_csv(w))?;
            let v = report.summary_json();
            let bad = report.n_violations > 0
                || (which == AuditKind::Curvelen && v.get("sandwich") != Some(&Value::Bool(true)));
            (v, bad)
        }
    };
    let name = format!("{which:?}").to_lowercase();
    out.write_json(&format!("audit_{name}.json"), &summary)?;
    print_json(&summary);
    Ok(if cli.strict.is_some() && violated {
        EXIT_STRICT
    } else {
        EXIT_OK
    })
}

fn cmd_correlations(cfg: &Config, h1: &str, h2: &str, out: &mut Outputs) -> CmdResult {
    let m = slow_map(cfg)?;
    let find = |n: &str| {
        observable_by_name(n, &m.chart)
            .ok_or_else(|| Error::Config(format!("unknown observable '{n}'")))
    };
    let (o1, o2) = (find(h1)?, find(h2)?);
    let s = &cfg.stats;
    let series = orbit_series(&m, s.seed, s.burn_in, s.orbit_len, &[&o1, &o2])?;
    let corr = estimate_correlations(&series[0], &series[1], s.n_max)?;
    out.write_with("correlations.csv", |w| corr.write_csv(w))?;
    let fit = fit_correlation_decay(&corr, cfg.fit.n_min, cfg.fit.n_max.min(s.n_max), s.seed)?;
    let v = json!({
        "h1": h1, "h2": h2,
        "mean1": corr.mean1, "mean2": corr.mean2,
        "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
        "ci_lo": fit.ci_lo, "ci_hi": fit.ci_hi,
        "window": [fit.n_min, fit.n_max],
        "n_bins": fit.n_bins,
        "s1_target": m.constants.s1,
    });
    out.write_json("fit.json", &v)?;
    print_json(&v);
    Ok(EXIT_OK)
}

fn cmd_return_tail(cfg: &Config, out: &mut Outputs) -> CmdResult {
    let m = slow_map(cfg)?;
    let s = &cfg.stats;
    let base = build_base_set(&m, cfg.base_t_lo, cfg.base_t_hi, DEFAULT_Q_MIN, s.seed)?;
    let surv = estimate_return_tail(&m, &base, s.n_samples, s.n_max, s.seed)?;
    out.write_with("survival.csv", |w| surv.write_csv(w))?;
    let censored = surv.censored_fraction();
    if censored >= CENSOR_WARN {
        eprintln!("warning: censored fraction {censored:e} exceeds {CENSOR_WARN:e}");
    }
    let fit = fit_power_law(
        &surv,
        cfg.fit.n_min,
        cfg.fit.n_max,
        cfg.fit.min_count,
        s.seed,
    )?;
    let v = json!({
        "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
        "ci_lo": fit.ci_lo, "ci_hi": fit.ci_hi,
        "window": [fit.n_min, fit.n_max],
        "censored_fraction": censored,
        "n_bins": fit.n_bins,
        "gcd": surv.gcd,
        "total": surv.total,
        "target": 1.0 / cfg.slowdown.alpha_slow,
        "sandwich": [m.constants.gamma2 - 1.0, m.constants.gamma1 - 1.0],
    });
    out.write_json("fit.json", &v)?;
    print_json(&v);
    Ok(EXIT_OK)
}

fn cmd_orbit(cfg: &Config, dump: bool, out: &mut Outputs) -> CmdResult {
    let m = slow_map(cfg)?;
    let s = &cfg.stats;
    let mut t_sum = 0.0;
    let mut err = None;
    if dump {
        out.write_with("orbit.csv", |w| {
            writeln!(w, "step,t,x,y")?;
            let r = visit_orbit(&m, s.seed, s.burn_in, s.orbit_len, |i, q| {
                t_sum += q.t();
                if err.is_none() {
                    if let Err(e) = writeln!(w, "{i},{:.17e},{:.17e},{:.17e}", q.t(), q.x(), q.y())
                    {
                        err = Some(e);
                    }
                }
            });
            if let Some(e) = err.take() {
                return Err(e);
            }
            r.map_err(|e| std::io::Error::other(e.to_string()))
        })?;
    } else {
        visit_orbit(&m, s.seed, s.burn_in, s.orbit_len, |_, q| t_sum += q.t())?;
    }
    let v = json!({ "length": s.orbit_len, "burn_in": s.burn_in, "mean_t": t_sum / s.orbit_len as f64 });
    out.write_json("orbit.json", &v)?;
    print_json(&v);
    Ok(EXIT_OK)
}
