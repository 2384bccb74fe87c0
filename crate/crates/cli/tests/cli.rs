use std::path::Path;
use std::process::{Command, Output};

use maxreg_lab::config::OperatorSpec;
use maxreg_lab::{run, Command as Sub, ExperimentConfig};

fn lab(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maxreg-lab"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let p = dir.join("config.json");
        std::fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn identity_semigroup_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"operator": {"inline": {"dim": 1, "re": [[1.0]]}}}"#;
    let o = lab(&["semigroup"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/semigroup.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let analyticity: f64 = row[3].parse().unwrap();
    // sup_t t e^{-t} = e^{-1}
    assert!((analyticity - (-1f64).exp()).abs() < 1e-4, "{analyticity}");
    assert!(dir.path().join("out/profile.csv").exists());
    assert!(dir.path().join("out/run.json").exists());
}

#[test]
fn skew_operator_fails_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"operator": {"inline": {"dim": 2, "re": [[0.0, -1.0], [1.0, 0.0]]}}}"#;
    let o = lab(&["semigroup"], Some(cfg), dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"operator": {"random_accretive": {"dim": 2, "margin": 0.1}}}"#;
    assert_eq!(code(&lab(&["semigroup"], Some(cfg), dir.path())), 2);
    assert_eq!(
        code(&lab(&["semigroup"], Some(r#"{"seed": null}"#), dir.path())),
        2
    );
}

#[test]
fn alpha_outside_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&lab(&["kato"], Some(r#"{"alphas": [0.6]}"#), dir.path())),
        2
    );
    assert_eq!(
        code(&lab(&["cotlar"], Some(r#"{"alphas": [0.0]}"#), dir.path())),
        2
    );
}

#[test]
fn malformed_config_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lab(&["kato"], Some("{not json"), dir.path())), 2);
    assert_eq!(code(&lab(&["kato"], Some("[1, 2]"), dir.path())), 2);
    assert_eq!(
        code(&lab(&["kato"], Some(r#"{"bogus": 1}"#), dir.path())),
        2
    );
    assert_eq!(code(&lab(&["nonsense"], None, dir.path())), 2);
    let o = lab(
        &["kato", "--config", "/nonexistent/cfg.json"],
        None,
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn print_defaults_round_trips() {
    for sub in Sub::ALL {
        let dir = tempfile::tempdir().unwrap();
        let o = lab(&[sub.name(), "--print-defaults"], None, dir.path());
        assert_eq!(code(&o), 0);
        let text = String::from_utf8(o.stdout).unwrap();
        let parsed = ExperimentConfig::parse(sub, &text).unwrap();
        assert_eq!(parsed, ExperimentConfig::defaults(sub));
    }
}

#[test]
fn null_space_counterexample_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"operator": {"inline": {"dim": 2, "re": [[1.0, 0.0], [0.0, 0.0]]}},
                  "counterexample": {"u": {"re": [0.0, 1.0], "im": [0.0, 0.0]}}}"#;
    assert_eq!(code(&lab(&["counterexample"], Some(cfg), dir.path())), 1);
}

#[test]
fn hermitian_kato_ratios_are_one() {
    let mut cfg = ExperimentConfig::defaults(Sub::Kato);
    cfg.operator = OperatorSpec::List(vec![
        OperatorSpec::inline(&[&[2.0, 1.0], &[1.0, 3.0]]),
        OperatorSpec::inline(&[&[0.5]]),
    ]);
    let o = run(Sub::Kato, &cfg).unwrap();
    assert!(o.passed());
    assert!(o.checks.iter().any(|c| c.name.contains("Hermitian")));
    let csv = o.file("kato.csv").unwrap();
    for line in csv.lines().skip(1) {
        let ratio: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((ratio - 1.0).abs() < 1e-9, "{line}");
    }
}

#[test]
fn zero_data_cauchy_problem() {
    let mut cfg = ExperimentConfig::defaults(Sub::Cauchy);
    cfg.cauchy.f = maxreg_lab::config::ForcingSpec::Zero;
    cfg.cauchy.u0 = maxreg_core::cauchy::VecJson {
        re: vec![0.0],
        im: vec![0.0],
    };
    let o = run(Sub::Cauchy, &cfg).unwrap();
    let sol = o.file("solution_0.csv").unwrap();
    for line in sol.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0);
    }
    assert!(o.file("cauchy.json").is_some());
}

#[test]
fn run_json_has_timestamp_line_first() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &["counterexample"],
        Some(r#"{"counterexample": {"decades": 5}}"#),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("out/run.json")).unwrap();
    assert!(maxreg_lab::output::is_timestamp_line(
        text.lines().nth(1).unwrap()
    ));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["command"], "counterexample");
    assert_eq!(v["pass"], true);
}
