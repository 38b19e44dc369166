//! Flat `key = value` configuration files with `[section]` headers. Keys are
//! namespaced as `section.key`; lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated section header", idx + 1))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", idx + 1))?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            if values.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(format!("line {}: duplicate key `{full}`", idx + 1));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Typed lookup; a present-but-unparseable value is an error.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("config key `{key}` has invalid value `{raw}`")),
        }
    }

    /// Comma-separated list lookup.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse_list(raw)
                .map(Some)
                .map_err(|item| format!("config key `{key}` has invalid entry `{item}`")),
        }
    }

    /// Reject keys outside the documented set, so typos fail loudly.
    pub fn ensure_known(&self, known: &[&str]) -> Result<(), String> {
        for key in self.values.keys() {
            if !known.contains(&key.as_str()) {
                return Err(format!("unknown config key `{key}`"));
            }
        }
        Ok(())
    }
}

/// Parse a comma-separated list, returning the offending item on failure.
pub fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| s.to_string()))
        .collect()
}
