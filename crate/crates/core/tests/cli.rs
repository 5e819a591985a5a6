use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn solenoid(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_solenoid"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("out/manifest.json")).unwrap()).unwrap()
}

/// `(file, sha256)` pairs listed in the manifest, after checking each hash
/// against the file on disk.
fn verified_outputs(dir: &Path) -> Vec<(String, String)> {
    let m = manifest(dir);
    let outputs = m["outputs"].as_object().expect("outputs object");
    assert!(!outputs.is_empty());
    outputs
        .iter()
        .map(|(name, hash)| {
            let bytes = std::fs::read(dir.join("out").join(name)).unwrap();
            let actual = hex::encode(Sha256::digest(&bytes));
            assert_eq!(hash.as_str().unwrap(), actual, "{name}");
            (name.clone(), actual)
        })
        .collect()
}

#[test]
fn constants_manifest_echoes_config_and_hashes() {
    let d = tempfile::tempdir().unwrap();
    let o = solenoid(
        d.path(),
        "slowdown.alpha = 0.25\n",
        &["constants", "--check-regime"],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    verified_outputs(d.path());
    let m = manifest(d.path());
    assert_eq!(m["command"], "constants");
    assert_eq!(m["config"]["slowdown.alpha"], 0.25);
    assert_eq!(m["config"]["solenoid.m"], 2);
    let c: Value =
        serde_json::from_slice(&std::fs::read(d.path().join("out/constants.json")).unwrap())
            .unwrap();
    assert_eq!(c["regime_theorem2"], false);
    assert!((c["regime_lhs"].as_f64().unwrap() - 4.755_424).abs() < 1e-6);
    assert_eq!(c["gamma2"], 5.0);
}

#[test]
fn regime_keys_need_the_flag() {
    let d = tempfile::tempdir().unwrap();
    let o = solenoid(d.path(), "", &["constants"]);
    assert_eq!(o.status.code(), Some(0));
    let c: Value =
        serde_json::from_slice(&std::fs::read(d.path().join("out/constants.json")).unwrap())
            .unwrap();
    assert!(c.get("regime_lhs").is_none());
    assert!(c.get("gamma1").is_some());
}

#[test]
fn config_and_usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    for (cfg, args) in [
        ("no.such.key = 1\n", vec!["constants"]),
        ("solenoid.lambda = 0.6\n", vec!["constants"]),
        (
            "stats.orbit_len = 5\nstats.n_max = 10\n",
            vec!["correlations", "cos2pit", "one"],
        ),
        ("", vec!["correlations", "cos2pit", "no_such_observable"]),
        ("", vec!["no-such-command"]),
    ] {
        let o = solenoid(d.path(), cfg, &args);
        assert_eq!(o.status.code(), Some(1), "{cfg:?} {args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn numerical_failure_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let o = solenoid(
        d.path(),
        "integrator.max_steps = 3\n",
        &["audit", "qbounds"],
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn strict_audit_failure_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let coarse = solenoid(d.path(), "chart.K = 6\n", &["conjugacy-check", "--strict"]);
    assert_eq!(coarse.status.code(), Some(3));
    let fine = solenoid(d.path(), "", &["conjugacy-check", "--strict"]);
    assert_eq!(fine.status.code(), Some(0));
    let loose = solenoid(
        d.path(),
        "chart.K = 6\n",
        &["--strict", "1e-3", "conjugacy-check"],
    );
    assert_eq!(loose.status.code(), Some(0));
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let runs: &[(&str, &[&str])] = &[
        (
            "stats.n_samples = 4000\nstats.n_max = 200\nfit.n_min = 2\nfit.n_max = 60\nfit.min_count = 20\n",
            &["return-tail"],
        ),
        (
            "stats.orbit_len = 20000\nstats.burn_in = 100\nstats.n_max = 50\nfit.n_min = 1\nfit.n_max = 20\n",
            &["correlations", "cos2pit", "xcoord"],
        ),
        ("audit.n_trials = 60\n", &["audit", "separation"]),
        ("stats.orbit_len = 2000\n", &["orbit", "--dump"]),
    ];
    for (cfg, args) in runs {
        let hashes: Vec<_> = ["1", "4"]
            .iter()
            .map(|t| {
                let d = tempfile::tempdir().unwrap();
                let o = solenoid(d.path(), &format!("{cfg}run.threads = {t}\n"), args);
                assert_eq!(
                    o.status.code(),
                    Some(0),
                    "{args:?}: {}",
                    String::from_utf8_lossy(&o.stderr)
                );
                verified_outputs(d.path())
            })
            .collect();
        assert_eq!(hashes[0], hashes[1], "{args:?}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let d = tempfile::tempdir().unwrap();
    let o = solenoid(
        d.path(),
        "stats.seed = 5\nstats.orbit_len = 100\n",
        &["--seed", "9", "orbit"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(d.path())["config"]["stats.seed"], 9);
}
