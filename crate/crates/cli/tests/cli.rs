use std::process::{Command, Output};

fn ahcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ahcert")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validation_failure_exits_one() {
    let o = ahcert(&["--explicit", "1,3,5", "--stage-cap", "3", "validate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] d(n) > 2^(n-1)"));
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(ahcert(&["--config", "/nonexistent.toml", "validate"]).status.code(), Some(2));
    assert_eq!(ahcert(&["--preset", "nope", "validate"]).status.code(), Some(2));
    assert_eq!(ahcert(&["--rho", "x/y", "kappa"]).status.code(), Some(2));
    assert_eq!(ahcert(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn kappa_and_sequences_print() {
    let o = ahcert(&["kappa"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("kappa in [0.8868277626, 0.8868348573]"));
    let o = ahcert(&["--stage-cap", "3", "sequences"]);
    assert!(stdout(&o).contains("n=3 d=1000 l=1004 r=1126488 s=1000000"));
}

#[test]
fn certify_then_replay_and_tamper() {
    let dir = std::env::temp_dir().join(format!("ahcert-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cert = dir.join("cert.json");
    let cert_s = cert.to_str().unwrap();
    let o = ahcert(&["certify", "--out", cert_s]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("n = 1, M = 17"));
    assert!(ahcert(&["replay", cert_s]).status.success());

    let text = std::fs::read_to_string(&cert).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, text.replacen(r#""M": "17""#, r#""M": "22""#, 1)).unwrap();
    let o = ahcert(&["replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] universal: M/r(1) < 2*kappa_lo"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn dot_diagrams() {
    let o = ahcert(&["dot", "--depth", "1"]);
    let text = stdout(&o);
    assert!(text.starts_with("digraph stages {"));
    assert_eq!(text.matches("black:black").count(), 2);
    let o = ahcert(&["dot", "--depth", "2", "--cross"]);
    assert_eq!(stdout(&o).matches("style=dotted").count(), 10);
    assert_eq!(ahcert(&["dot", "--depth", "5"]).status.code(), Some(1));
}

#[test]
fn tiny_preset_run_passes_without_certificate() {
    let o = ahcert(&["--preset", "tiny-235", "--json", "run"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["certificate"]["status"], "skipped");
    assert_eq!(v["kappa"]["certified"], false);
    assert!(v.get("timing").is_none());
}

#[test]
fn towers_and_bott_subcommands() {
    let o = ahcert(&["--preset", "tiny-235", "towers"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("n=3: length 8"));
    let o = ahcert(&["--preset", "tiny-235", "bott"]);
    assert!(stdout(&o).contains("m=2: 6 line atoms + trivial rank 9"));
}
