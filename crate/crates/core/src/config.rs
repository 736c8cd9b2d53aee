//! Flat `key = value` configuration files and overrides.
//!
//! Any serde struct with scalar fields works as a schema: keys are its field names, values
//! are parsed according to the type of the current (default) value. Unknown keys are
//! rejected. `#` starts a comment.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

/// Parses `key = value` lines; returns pairs with their 1-based line numbers.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn as_object<T: Serialize>(cfg: &T) -> Map<String, Value> {
    match serde_json::to_value(cfg).expect("config serializes") {
        Value::Object(m) => m,
        _ => panic!("config must serialize to an object"),
    }
}

fn parse_like(current: &Value, key: &str, raw: &str) -> Result<Value> {
    let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {raw:?}"));
    Ok(match current {
        Value::Bool(_) => Value::Bool(match raw {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            _ => return Err(bad("a boolean")),
        }),
        Value::Number(n) if n.is_u64() => Value::Number(raw.parse::<u64>().map_err(|_| bad("a non-negative integer"))?.into()),
        Value::Number(n) if n.is_i64() => Value::Number(raw.parse::<i64>().map_err(|_| bad("an integer"))?.into()),
        Value::Number(_) => {
            let v: f64 = raw.parse().map_err(|_| bad("a number"))?;
            Value::Number(Number::from_f64(v).ok_or_else(|| bad("a finite number"))?)
        }
        Value::String(_) => Value::String(raw.to_string()),
        _ => return Err(Error::Config(format!("{key} cannot be set from a flat config"))),
    })
}

/// Returns `base` with `pairs` applied in order.
pub fn apply_pairs<T, K, V>(base: &T, pairs: impl IntoIterator<Item = (K, V)>) -> Result<T>
where
    T: Serialize + DeserializeOwned,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut obj = as_object(base);
    for (k, v) in pairs {
        let (k, v) = (k.as_ref(), v.as_ref());
        let current = obj.get(k).ok_or_else(|| {
            let mut keys: Vec<&String> = obj.keys().collect();
            keys.sort();
            let keys: Vec<&str> = keys.iter().map(|s| s.as_str()).collect();
            Error::Config(format!("unknown config key {k:?}; valid keys: {}", keys.join(", ")))
        })?;
        let parsed = parse_like(current, k, v)?;
        obj.insert(k.to_string(), parsed);
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))
}

/// Applies a config file, then `overrides` (`key=value` strings), on top of `base`.
pub fn load_with_overrides<T>(base: &T, file: Option<&Path>, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut cfg = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            let pairs = parse_pairs(&text, p)?;
            apply_pairs(base, pairs.into_iter().map(|(_, k, v)| (k, v)))?
        }
        None => apply_pairs(base, std::iter::empty::<(&str, &str)>())?,
    };
    let mut pairs = Vec::with_capacity(overrides.len());
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override must be key=value, got {o:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    cfg = apply_pairs(&cfg, pairs)?;
    Ok(cfg)
}

/// `key = value` lines, sorted by key; parses back to the same config.
pub fn render<T: Serialize>(cfg: &T) -> String {
    let obj = as_object(cfg);
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.sort();
    let mut out = String::new();
    for k in keys {
        let v = match &obj[k] {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

pub fn has_key<T: Serialize>(cfg: &T, key: &str) -> bool {
    as_object(cfg).contains_key(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthConfig;
    use crate::train::TrainConfig;

    #[test]
    fn render_round_trips() {
        let cfg = TrainConfig {
            lambda_s: 0.8,
            patience: 3,
            monitor: crate::train::Monitor::TrainF1,
            ..TrainConfig::default()
        };
        let text = render(&cfg);
        let pairs = parse_pairs(&text, Path::new("echo")).unwrap();
        let back: TrainConfig = apply_pairs(&TrainConfig::default(), pairs.into_iter().map(|(_, k, v)| (k, v))).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        assert!(matches!(
            apply_pairs(&SynthConfig::default(), [("bogus", "1")]),
            Err(Error::Config(_))
        ));
        assert!(apply_pairs(&SynthConfig::default(), [("n", "-3")]).is_err());
        assert!(matches!(
            parse_pairs("n = 3\nnonsense\n", Path::new("c.txt")),
            Err(Error::Parse { line: 2, .. })
        ));
        let c: SynthConfig = apply_pairs(&SynthConfig::default(), [("n", "10"), ("noise", "0.5")]).unwrap();
        assert_eq!((c.n, c.noise), (10, 0.5));
    }

    #[test]
    fn enum_fields_by_name() {
        let c: TrainConfig = apply_pairs(&TrainConfig::default(), [("missing_role", "image")]).unwrap();
        assert_eq!(c.missing_role, crate::data::Modality::Image);
        assert!(apply_pairs(&TrainConfig::default(), [("missing_role", "audio")]).is_err());
    }
}
