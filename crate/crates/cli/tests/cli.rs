use std::path::Path;
use std::process::{Command, Output};

fn neuroloop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuroloop"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NEUROLOOP_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(&["run", "--config", "nope.json", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"tau_mem": 20.0, "betta": 0.1}"#).unwrap();
    let o = neuroloop(&["run", "--config", "c.json", "--iterations", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("betta"), "{}", stderr(&o));

    let o = neuroloop(&["run", "--set", "gamma=2", "--iterations", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn zero_iterations_writes_initial_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(&["run", "--iterations", "0", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("o/summary.json"))).unwrap();
    assert_eq!(summary["iterations"], 0);
    assert_eq!(summary["mean_expected_reward"], 0.0);
    let csv = read(dir.path().join("o/iterations.csv"));
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(read(dir.path().join("o/weights.csv")).lines().count(), 32);
}

#[test]
fn output_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_neuroloop"))
        .args(["run", "--iterations", "0"])
        .current_dir(dir.path())
        .env("NEUROLOOP_OUT", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from-env/manifest.json").exists());
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(
        &["run", "--iterations", "300", "--seed-temporal", "9", "--profile", "uncalibrated", "--checksum-every", "50", "--out", "a"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = neuroloop(&["run", "--manifest", "a/manifest.json", "--out", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["iterations.csv", "weights.csv"] {
        let (a, b) = (read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)));
        assert_eq!(a, b, "{f}");
    }
    assert_eq!(read(dir.path().join("a/iterations.csv")).lines().count(), 302);

    let o = neuroloop(&["run", "--manifest", "a/manifest.json", "--seed-env", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_study_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(&["study", "learning-curves"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("usage") && err.contains("learning-curve"), "{err}");
}

#[test]
fn small_study_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(&["study", "learning-curve", "--trials", "2", "--iterations", "200", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["study.json", "report.json", "curve.csv", "curve.svg"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("s/report.json"))).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_with_no_iterations_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(&["bench", "--iterations", "0"], dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), "no iterations\n");
}

#[test]
fn bench_reports_phases() {
    let dir = tempfile::tempdir().unwrap();
    let o = neuroloop(&["bench", "--iterations", "400", "--json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["iterations"], 400);
    assert!(r["environment_fraction"].as_f64().unwrap() < 0.05);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(neuroloop(&["--help"], dir.path()).status.success());
    assert_eq!(neuroloop(&["frobnicate"], dir.path()).status.code(), Some(1));
}
