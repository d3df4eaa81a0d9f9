//! Flat `key=value` settings merged from defaults, a config file and flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Resolved settings for one command. Later layers win: defaults, then the
/// config file, then command-line flags.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value", lineno + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", lineno + 1);
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    pub fn resolve(
        defaults: &[(&str, &str)],
        file: Option<&BTreeMap<String, String>>,
        flags: Vec<(&str, Option<String>)>,
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(file) = file {
            for (k, v) in file {
                if !values.contains_key(k) {
                    bail!("unknown config key '{k}' (known: {})", defaults.iter().map(|d| d.0).collect::<Vec<_>>().join(", "));
                }
                values.insert(k.clone(), v.clone());
            }
        }
        for (k, v) in flags {
            debug_assert!(values.contains_key(k), "flag {k} has no default entry");
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn text(&self, key: &str) -> Result<String> {
        let v = self.raw(key);
        if v.is_empty() {
            bail!("{key} is required");
        }
        Ok(v.to_string())
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.raw(key)).with_context(|| format!("invalid value for {key}"))
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if !(v > 0.0) || !v.is_finite() {
            bail!("{key} must be positive and finite, got {v}");
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key).trim().parse().with_context(|| format!("{key} must be a nonnegative integer, got '{}'", self.raw(key)))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.raw(key).trim().parse().with_context(|| format!("{key} must be a nonnegative integer, got '{}'", self.raw(key)))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.raw(key).trim() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => bail!("{key} must be true or false, got '{other}'"),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(self.raw(key)).with_context(|| format!("invalid list for {key}"))
    }
}

impl fmt::Display for Settings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
        _ => {
            let v: f64 = t.parse().map_err(|_| anyhow!("'{t}' is not a number"))?;
            if v.is_nan() {
                bail!("NaN is not allowed");
            }
            Ok(v)
        }
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file = parse_config("# comment\np = 3\neps=0.05\n").unwrap();
        let s = Settings::resolve(
            &[("p", "2"), ("eps", "0.1"), ("k", "4")],
            Some(&file),
            vec![("eps", Some("0.025".into())), ("k", None)],
        )
        .unwrap();
        assert_eq!(s.f64("p").unwrap(), 3.0);
        assert_eq!(s.f64("eps").unwrap(), 0.025);
        assert_eq!(s.usize("k").unwrap(), 4);
        assert_eq!(s.to_string(), "eps=0.025\nk=4\np=3\n");
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_errors() {
        let file = parse_config("q=1").unwrap();
        assert!(Settings::resolve(&[("p", "2")], Some(&file), vec![]).is_err());
        assert!(parse_config("nonsense").is_err());
    }

    #[test]
    fn lists_and_infinity() {
        assert_eq!(parse_list("0.1, 0.05").unwrap(), vec![0.1, 0.05]);
        assert_eq!(parse_f64("inf").unwrap(), f64::INFINITY);
        assert!(parse_f64("nan").is_err());
    }
}
