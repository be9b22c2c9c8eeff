//! End-to-end CLI behavior: stdout contracts, exit codes, and the rule that
//! usage errors never leave partial output files behind.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_redunsense")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_reports_unit_component_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gen", "--arch", "cos", "--bits", "3", "--out", "cos.json"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "7 unit components\n");

    // RES reaches the same resolution with the same unit-component budget
    let out = run_in(dir.path(), &["gen", "--arch", "res", "--bits", "3", "--out", "res.json"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "7 unit components\n");

    let out = run_in(
        dir.path(),
        &["gen", "--arch", "crs", "--bits", "3", "--replicas", "2", "--out", "crs.json"],
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out), "14 unit components\n");
}

#[test]
fn gen_crs_requires_replicas() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gen", "--arch", "crs", "--bits", "3", "--out", "crs.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("crs.json").exists(), "usage error left a file");
}

#[test]
fn count_single_code_prints_the_count() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["gen", "--arch", "res", "--bits", "3", "--out", "res.json"])
        .status
        .success());
    let out = run_in(dir.path(), &["count", "--set", "res.json", "--code", "3"]);
    assert!(out.status.success());
    let count: u64 = stdout(&out).trim().parse().unwrap();
    assert!(count >= 2, "dual binary code 3 must have multiple microstates");
}

#[test]
fn count_all_writes_a_profile() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["gen", "--arch", "cos", "--bits", "3", "--out", "cos.json"])
        .status
        .success());
    let out = run_in(dir.path(), &["count", "--set", "cos.json", "--all", "--out", "p.csv"]);
    assert!(out.status.success());
    let body = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("code,count"));
    // binary weights: exactly one microstate per code
    assert!(lines.all(|l| l.ends_with(",1")));
}

#[test]
fn count_all_without_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["gen", "--arch", "cos", "--bits", "3", "--out", "cos.json"])
        .status
        .success());
    let out = run_in(dir.path(), &["count", "--set", "cos.json", "--all"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn count_code_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["gen", "--arch", "cos", "--bits", "3", "--out", "cos.json"])
        .status
        .success());
    let out = run_in(dir.path(), &["count", "--set", "cos.json", "--code", "99"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_rejects_inadmissible_strategy_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["gen", "--arch", "res", "--bits", "4", "--out", "res.json"])
        .status
        .success());
    let out = run_in(
        dir.path(),
        &[
            "analyze", "--set", "res.json", "--sigma", "0.02", "--seed", "1", "--strategy",
            "replica-best", "--out", "tf.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("tf.csv").exists(), "usage error left a file");
}

#[test]
fn analyze_writes_metrics_and_prints_max_inl() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["gen", "--arch", "res", "--bits", "4", "--out", "res.json"])
        .status
        .success());
    let out = run_in(
        dir.path(),
        &[
            "analyze", "--set", "res.json", "--sigma", "0.02", "--seed", "1", "--strategy",
            "split-dp", "--out", "tf.csv",
        ],
    );
    assert!(out.status.success());
    let line = stdout(&out);
    let v: f64 = line.strip_prefix("max_inl ").unwrap().trim().parse().unwrap();
    assert!(v.is_finite() && v >= 0.0);
    let body = std::fs::read_to_string(dir.path().join("tf.csv")).unwrap();
    assert!(body.starts_with("# realized_id="));
    assert!(body.contains("code,output,inl,dnl"));
    // span 15 -> 16 codes + comment + header
    assert_eq!(body.lines().count(), 18);
}

#[test]
fn sweep_rejects_bad_config_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        // replica_best on a cos architecture is inadmissible
        serde_json::json!({
            "architectures": [{"kind": "cos"}],
            "strategies": [{"kind": "replica_best"}],
            "sigma_list": [0.01],
            "n_list": [4],
            "trials": 2,
            "base_seed": 0,
            "mode": "gain_normalized"
        })
        .to_string(),
    )
    .unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "config.json", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out").join("rows.csv").exists());
}

#[test]
fn sweep_and_compare_report_improvement() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        serde_json::json!({
            "architectures": [{"kind": "cos"}, {"kind": "res"}],
            "strategies": [{"kind": "canonical"}, {"kind": "mitm"}],
            "sigma_list": [0.02],
            "n_list": [5],
            "trials": 10,
            "base_seed": 3,
            "mode": "gain_normalized"
        })
        .to_string(),
    )
    .unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "config.json", "--out-dir", "out"]);
    assert!(out.status.success());
    // 2 architectures x 2 strategies x 10 trials
    assert_eq!(stdout(&out), "40 rows, 0 reseeds\n");

    let out = run_in(dir.path(), &["compare", "out/results.json"]);
    assert!(out.status.success());
    let body = stdout(&out);
    assert_eq!(body.lines().count(), 4);
    let ratio_of = |prefix: &str| -> f64 {
        body.lines()
            .find(|l| l.starts_with(prefix))
            .unwrap_or_else(|| panic!("missing {prefix} in {body}"))
            .rsplit(' ')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    // the baseline cell compares to itself
    assert_eq!(ratio_of("COS canonical"), 1.0);
    // redundancy plus exact selection beats the baseline on average
    assert!(ratio_of("RES mitm") > 1.0);
}

#[test]
fn missing_set_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["count", "--set", "nope.json", "--code", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_and_bad_flags_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run_in(dir.path(), &["gen", "--arch", "hex"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["no-such-command"]).status.code(), Some(1));
}
