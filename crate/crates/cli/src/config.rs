//! JSON run configuration.
//!
//! The file is one JSON object whose keys are flag names (`t_end` and
//! `t-end` both name `--t-end`). An optional `"command"` key must match the
//! subcommand given on the command line. Each entry is turned back into a
//! flag and appended to the arguments unless that flag was already given, so
//! flags always win; unknown keys are then rejected by the argument parser
//! like unknown flags.

use std::ffi::OsString;
use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

pub fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Usage(format!("config {}: expected a JSON object", path.display()))),
        Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
    }
}

fn given(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&eq))
}

fn render(key: &str, value: &Value) -> Result<Option<String>, CliError> {
    let scalar = |v: &Value| match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(CliError::Usage(format!("config key {key:?}: unsupported list entry {other}"))),
    };
    Ok(match value {
        Value::Bool(_) | Value::Null => None,
        Value::Array(items) => {
            if items.is_empty() {
                return Err(CliError::Usage(format!("config key {key:?}: empty list")));
            }
            Some(items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(","))
        }
        Value::Object(map) => Some(
            map.iter()
                .map(|(k, v)| scalar(v).map(|s| format!("{k}={s}")))
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
        ),
        other => Some(scalar(other)?),
    })
}

/// `args` with the config entries appended as flags that are not yet present.
pub fn merge(args: &[OsString], config: &Map<String, Value>, command: &str) -> Result<Vec<OsString>, CliError> {
    let mut merged = args.to_vec();
    for (key, value) in config {
        if key == "command" {
            match value.as_str() {
                Some(c) if c == command => continue,
                _ => {
                    return Err(CliError::Usage(format!(
                        "config names command {value} but the command line runs {command}"
                    )))
                }
            }
        }
        if key == "config" {
            return Err(CliError::Usage("config files cannot name another config".into()));
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if given(args, &flag) {
            continue;
        }
        match (value, render(key, value)?) {
            (Value::Bool(true), _) => merged.push(flag.into()),
            (_, Some(v)) => {
                merged.push(flag.into());
                merged.push(v.into());
            }
            _ => {}
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_win_over_file_values() {
        let cfg = json!({"mu": 50, "t_end": 4, "model": {"nu": 2}, "mus": [25, 50], "quiet": true, "skip": false});
        let merged = merge(&os(&["magspec", "trajectory", "--mu=100"]), cfg.as_object().unwrap(), "trajectory").unwrap();
        let text: Vec<&str> = merged.iter().map(|s| s.to_str().unwrap()).collect();
        assert_eq!(
            text,
            ["magspec", "trajectory", "--mu=100", "--model", "nu=2", "--mus", "25,50", "--quiet", "--t-end", "4"]
        );
    }

    #[test]
    fn command_mismatch_is_a_usage_error() {
        let cfg = json!({"command": "kstar"});
        assert!(merge(&os(&["magspec", "gfunc"]), cfg.as_object().unwrap(), "gfunc").is_err());
        assert!(merge(&os(&["magspec", "kstar"]), cfg.as_object().unwrap(), "kstar").is_ok());
    }
}
