use std::path::PathBuf;
use std::process::{Command, Output};

fn drone() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demos/drone.json")
}

fn tlps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlps")).args(args).env_remove("TLPS_LOG").output().unwrap()
}

fn with_system(cmd: &str, spec: &str, extra: &[&str]) -> Output {
    let sys = drone();
    let mut args = vec![cmd, "--system", sys.to_str().unwrap(), "--spec", spec];
    args.extend_from_slice(extra);
    tlps(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_reports_start_value() {
    let o = with_system("solve", "F r_ws & G r_safe", &[]);
    assert_eq!(o.status.code(), Some(0));
    let dump: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(dump["states"], 48);
    assert!(String::from_utf8_lossy(&o.stderr).contains("V(16) = 1"));
}

#[test]
fn filter_output_is_deterministic() {
    let args = ["--nominal", "random(3)"];
    let a = with_system("filter", "F[0,30] r_ws & G r_safe", &args);
    let b = with_system("filter", "F[0,30] r_ws & G r_safe", &args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let last: serde_json::Value = serde_json::from_str(stdout(&a).lines().last().unwrap()).unwrap();
    assert_eq!(last["rho"], 1);
    assert_eq!(last["guarantee_applicable"], true);
}

#[test]
fn rollout_lines_are_json() {
    let o = with_system("rollout", "F r_ws", &[]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn verify_with_no_instances_is_clean() {
    let o = tlps(&["verify", "--instances", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["discrepancies"], serde_json::json!([]));
}

#[test]
fn exit_codes() {
    assert_eq!(tlps(&["solve"]).status.code(), Some(1));
    assert_eq!(with_system("solve", "F unknown_region", &[]).status.code(), Some(1));
    assert_eq!(with_system("solve", "F (r_ws", &[]).status.code(), Some(2));
    assert_eq!(with_system("solve", "(F r_ws) U r_k", &[]).status.code(), Some(3));
    let missing = tlps(&["solve", "--system", "/nonexistent.json", "--spec", "F r_ws"]);
    assert_eq!(missing.status.code(), Some(4));
    assert_eq!(with_system("rollout", "F r_ws", &["--horizon", "2"]).status.code(), Some(5));
}

#[test]
fn counterexample_demo() {
    let o = tlps(&["demo", "counterexample"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).is_empty());
}
