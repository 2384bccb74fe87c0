//! Report files on disk.

use std::fs;
use std::path::Path;

use maxreg_core::report::fmt;
use serde::Serialize;
use serde_json::Value;

use crate::{CliError, Command, ExperimentConfig, Outcome};

/// Rounds every float in `v` to twelve significant digits.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked f64");
            let r: f64 = fmt(x).parse().unwrap_or(x);
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(round_floats).collect()),
        Value::Object(m) => {
            Value::Object(m.into_iter().map(|(k, x)| (k, round_floats(x))).collect())
        }
        other => other,
    }
}

/// Pretty JSON with floats at twelve significant digits.
pub fn to_json<T: Serialize>(x: &T) -> String {
    let v = round_floats(serde_json::to_value(x).expect("plain data serializes"));
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// `run.json`: timestamp on its own first line, then the command, the
/// effective config and the checks.
pub fn run_json(
    cmd: Command,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    generated_at: u64,
) -> String {
    let body = to_json(&serde_json::json!({
        "command": cmd.name(),
        "config": cfg,
        "pass": outcome.passed(),
        "checks": outcome.checks,
    }));
    format!("{{\n  \"generated_at\": {generated_at},{}", &body[1..])
}

pub fn write_outcome(
    dir: &Path,
    cmd: Command,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    generated_at: u64,
) -> Result<(), CliError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, text) in &outcome.files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io(&p))?;
    }
    let p = dir.join("run.json");
    fs::write(&p, run_json(cmd, cfg, outcome, generated_at)).map_err(io(&p))
}

/// True when the line is the timestamp line of `run.json`.
pub fn is_timestamp_line(line: &str) -> bool {
    line.trim_start().starts_with("\"generated_at\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_rounded_to_twelve_digits() {
        let v = round_floats(serde_json::json!({"x": [0.1 + 0.2, 1], "y": "s"}));
        assert_eq!(v["x"][0].as_f64().unwrap(), 0.3);
        assert_eq!(v["x"][1], 1);
        assert_eq!(v["y"], "s");
    }

    #[test]
    fn timestamp_line() {
        assert!(is_timestamp_line("  \"generated_at\": 17,"));
        assert!(!is_timestamp_line("  \"command\": \"kato\","));
    }
}
