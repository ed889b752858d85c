use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn monorare(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_monorare"));
    cmd.args(args).env_remove("MONORARE_SEED");
    if let Some(s) = seed_env {
        cmd.env("MONORARE_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr carries a JSON error")
}

#[test]
fn run_writes_sandwiching_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 500, "seed": 1}"#);
    let out_dir = dir.path().join("out");
    let out = monorare(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("estimate.json")).unwrap()).unwrap();
    let (lo, hi) = (est["bound_lower"].as_f64().unwrap(), est["bound_upper"].as_f64().unwrap());
    assert!(lo <= 0.05 && 0.05 <= hi);
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("k,x_1,x_2,xi,p_minus,p_plus,calls_cum\n"));
    assert_eq!(csv.lines().count() - 1, est["calls_total"].as_u64().unwrap() as usize);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "toy", "d": 3, "p": 0.05, "n": 200, "seed": 11}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert!(monorare(&["run", "--config", &cfg, "--out", d.to_str().unwrap()], None).status.success());
    }
    for f in ["estimate.json", "trajectory.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 50}"#);
    let out = monorare(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "config");

    // The environment supplies the seed.
    let out = monorare(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], Some("5"));
    assert!(out.status.success());
}

#[test]
fn environment_seed_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 50, "seed": 1}"#);
    let run = |sub: &str, env: Option<&str>| {
        let d = dir.path().join(sub);
        assert!(monorare(&["run", "--config", &cfg, "--out", d.to_str().unwrap()], env).status.success());
        fs::read(d.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("plain", None), run("env1", Some("1")));
    assert_ne!(run("plain2", None), run("env2", Some("2")));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let garbage = write_config(dir.path(), "bad.json", "{not json");
    assert_eq!(monorare(&["run", "--config", &garbage, "--out", out_dir], None).status.code(), Some(2));
    assert_eq!(monorare(&["run", "--config", "/nonexistent.json"], None).status.code(), Some(2));
    assert_eq!(monorare(&["frobnicate"], None).status.code(), Some(2));

    let one_rep = write_config(dir.path(), "cmp.json", r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 20, "seed": 1, "replications": 1}"#);
    let out = monorare(&["compare", "--config", &one_rep, "--out", out_dir], None);
    assert_eq!(out.status.code(), Some(2));

    let s0 = write_config(dir.path(), "boot.json", r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 20, "seed": 1, "bootstrap": {"s": 0}}"#);
    assert_eq!(monorare(&["bootstrap", "--config", &s0, "--out", out_dir], None).status.code(), Some(2));

    // A run whose initialization cannot bracket the probability is a runtime failure.
    let hopeless = write_config(
        dir.path(),
        "never.json",
        r#"{"problem": "custom", "seed": 1, "n": 10, "map": "sum", "threshold": -1.0, "signs": [1, 1],
            "marginals": [{"family": "uniform", "low": 0.0, "high": 1.0}, {"family": "uniform", "low": 0.0, "high": 1.0}]}"#,
    );
    let out = monorare(&["run", "--config", &hopeless, "--out", out_dir], None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "runtime");
}

#[test]
fn volume_command_reports_both_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vol.json", r#"{"vertices": [[0.8, 0.3], [0.5, 0.5], [0.2, 0.9]], "mc_samples": 200000, "seed": 3}"#);
    let out = monorare(&["volume", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((rep["exact"].as_f64().unwrap() - 0.42).abs() < 1e-12);
    assert!(rep["z_score"].as_f64().unwrap().abs() < 4.0);
    let bad = write_config(dir.path(), "badvol.json", r#"{"vertices": [[1.5, 0.2]]}"#);
    assert_eq!(monorare(&["volume", "--config", &bad], None).status.code(), Some(2));
}

#[test]
fn compare_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cmp.json",
        r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 100, "seed": 4, "replications": 3, "budgets": [50, 100]}"#,
    );
    let out = monorare(&["compare", "--config", &cfg, "--jobs", "1", "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 5);
}

#[test]
fn bootstrap_from_saved_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let run_cfg = write_config(dir.path(), "run.json", r#"{"problem": "toy", "d": 2, "p": 0.05, "n": 100, "seed": 2}"#);
    assert!(monorare(&["run", "--config", &run_cfg, "--out", dir.path().to_str().unwrap()], None).status.success());
    let traj = dir.path().join("trajectory.csv");
    let boot_cfg = write_config(
        dir.path(),
        "boot.json",
        &format!(
            r#"{{"problem": "toy", "d": 2, "p": 0.05, "seed": 2, "trajectory": {:?},
                "bootstrap": {{"m": 2000, "q": 100000, "s": 20, "network": {{"min_steps": 1000}}}}}}"#,
            traj.to_str().unwrap()
        ),
    );
    let out = monorare(&["bootstrap", "--config", &boot_cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bootstrap.json")).unwrap()).unwrap();
    let reps: Vec<f64> = rep["replicate_estimates"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let bias = rep["bias_hat"].as_f64().unwrap();
    assert!((bias - (mean - rep["surrogate_p"].as_f64().unwrap())).abs() < 1e-15);
    let c = rep["corrected_p"].as_f64().unwrap();
    assert!(rep["bound_lower"].as_f64().unwrap() <= c && c <= rep["bound_upper"].as_f64().unwrap());
    assert!(dir.path().join("surrogate.json").exists());
}
