use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn moldloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moldloop")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn screen_with_seed_succeeds_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = moldloop(&["screen", "--seed", "3", "--out", path(&out), "--self-test"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("hold_pressure"));
    for f in ["report.json", "design.csv", "screening.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let o = moldloop(&["report", "--out", path(&out), "--self-test"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!o.stdout.is_empty());
}

#[test]
fn quiet_prints_nothing_on_success() {
    let dir = tempfile::tempdir().unwrap();
    let o = moldloop(&["screen", "--seed", "4", "--out", path(dir.path()), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_seed_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = moldloop(&["screen", "--out", path(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"));

    let cfg = write_config(dir.path(), "kind = \"screen\"\n");
    let o = moldloop(&["screen", "--config", &cfg, "--out", path(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_flag_supplies_missing_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"screen\"\n");
    let o = moldloop(&["screen", "--config", &cfg, "--seed", "8", "--out", path(&dir.path().join("r"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("r/report.json")).unwrap();
    assert!(report.contains("\"seed\": 8"));
}

#[test]
fn unknown_key_is_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"closed-loop\"\nseed = 1\n[control]\nhold_presure = 380.0\n");
    let o = moldloop(&["loop", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("hold_presure"), "{}", stderr(&o));
}

#[test]
fn unreadable_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = moldloop(&["loop", "--config", path(&dir.path().join("absent.toml"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn kind_mismatch_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"regulate\"\nseed = 1\n");
    let o = moldloop(&["screen", "--config", &cfg, "--out", path(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("regulate"));
}

#[test]
fn degenerate_training_data_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "kind = \"train-inverse\"\nseed = 1\n\
         [[design.support]]\nparam = \"hold_pressure\"\nlow = 400.0\nhigh = 400.0\n\
         [[design.support]]\nparam = \"melt_temp\"\nlow = 230.0\nhigh = 230.0\n",
    );
    let o = moldloop(&["train", "--inverse", "--config", &cfg, "--out", path(&dir.path().join("r"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("train-inverse"));
}

#[test]
fn failed_check_exits_4_only_in_self_test() {
    let dir = tempfile::tempdir().unwrap();
    // No adjustments allowed: the perturbed start stays out of tolerance.
    let cfg = write_config(dir.path(), "kind = \"closed-loop\"\nseed = 2\n[control.loop]\nmax_iters = 0\n");
    let out = dir.path().join("r");
    let o = moldloop(&["loop", "--config", &cfg, "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = moldloop(&["loop", "--config", &cfg, "--out", path(&out), "--self-test"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = moldloop(&["report", "--out", path(&out), "--self-test"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn report_detects_tampered_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = moldloop(&["loop", "--seed", "5", "--out", path(&out), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log = out.join("control_log.csv");
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.last_mut().unwrap();
    let mut cells: Vec<String> = last.split(',').map(String::from).collect();
    // Last error column, just before rms, action, clamped.
    let err = cells.len() - 4;
    cells[err] = "9.5".into();
    *last = cells.join(",");
    fs::write(&log, lines.join("\n") + "\n").unwrap();
    let o = moldloop(&["report", "--out", path(&out), "--self-test"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn missing_report_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = moldloop(&["report", "--out", path(dir.path())]);
    assert_eq!(code(&o), 3);
}
