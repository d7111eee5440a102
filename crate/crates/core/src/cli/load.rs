//! Config files plus `--set key=value` overrides.

use std::path::Path;

use serde_json::{Map, Value};

use crate::orchestrator::{ConfigIssue, SimConfig};

fn issue(key: &str, msg: impl Into<String>) -> Vec<ConfigIssue> {
    vec![ConfigIssue::new(key, msg)]
}

/// Parses TOML, or JSON when the text starts with `{` or the path ends
/// in `.json`, into a generic value. Empty input is an empty table.
pub fn parse_config_text(text: &str, json: bool) -> Result<Value, Vec<ConfigIssue>> {
    if text.trim().is_empty() {
        return Ok(Value::Object(Map::new()));
    }
    if json || text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| issue("<file>", format!("invalid JSON: {e}")))
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| issue("<file>", format!("invalid TOML: {e}")))?;
        serde_json::to_value(table).map_err(|e| issue("<file>", e.to_string()))
    }
}

/// Literal of an override: JSON when it parses as JSON, else a string.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `a.b.c=value`, creating intermediate tables. Numeric segments
/// index into existing arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Vec<ConfigIssue>> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| issue(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(issue(key, "empty key segment"));
    }
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), override_value(raw.trim()));
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| issue(key, format!("`{seg}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| issue(key, format!("index {idx} out of range for {len} entries")))?;
                if last {
                    *slot = override_value(raw.trim());
                    return Ok(());
                }
                slot
            }
            _ => return Err(issue(key, format!("`{seg}` is inside a non-table value"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Deserializes and validates; errors carry the dotted key.
pub fn config_from_value(value: Value) -> Result<SimConfig, Vec<ConfigIssue>> {
    let config: SimConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_string() } else { path };
        issue(&key, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_and_validate(
    text: Option<(&str, bool)>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<SimConfig, Vec<ConfigIssue>> {
    let mut value = match text {
        Some((t, json)) => parse_config_text(t, json)?,
        None => Value::Object(Map::new()),
    };
    if !value.is_object() {
        return Err(issue("<root>", "config must be a table"));
    }
    let mut issues = Vec::new();
    for o in overrides {
        if let Err(mut e) = apply_override(&mut value, o) {
            issues.append(&mut e);
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    if let Some(s) = seed {
        value["seed"] = Value::from(s);
    }
    config_from_value(value)
}

pub fn load_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<SimConfig, Vec<ConfigIssue>> {
    match path {
        None => parse_and_validate(None, overrides, seed),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| issue("--config", format!("{}: {e}", p.display())))?;
            let json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            parse_and_validate(Some((&text, json)), overrides, seed)
        }
    }
}

/// TOML text that reloads to the same configuration.
pub fn to_toml(config: &SimConfig) -> String {
    toml::to_string(config).expect("config serializes to TOML")
}
