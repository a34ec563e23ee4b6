//! Flat `key = value` text used for configs and manifests.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique;
//! insertion order is kept when writing.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format("key-value text", format!("line {}: missing '='", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::format(
                    "key-value text",
                    format!("line {}: empty key", lineno + 1),
                ));
            }
            if kv.get(key).is_some() {
                return Err(Error::format(
                    "key-value text",
                    format!("line {}: duplicate key {key}", lineno + 1),
                ));
            }
            kv.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("cannot parse `{key}` = {raw:?}")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.require(key),
        }
    }

    /// Comma-separated list of numbers.
    pub fn require_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))?;
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("cannot parse element {s:?} of `{key}`"))
                })
            })
            .collect()
    }

    /// Entries under `prefix.`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let lead = format!("{prefix}.");
        KeyValues {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&lead).map(|k| (k.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Fails if any key is outside `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !allowed.contains(&key) {
                return Err(Error::InvalidConfig(format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Formats a float so that it parses back to the identical value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}
