//! Flat `key=value` config files and the flag > file > default lookup used by
//! the command-line tool.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::index::IndexParams;

/// Keys consumed by the command-line tool rather than the index.
pub const TOOL_KEYS: &[&str] = &[
    "io",
    "mode",
    "search_threads",
    "insert_threads",
    "duration_s",
    "search_ops",
    "insert_ops",
    "interval_ms",
    "interval_ops",
    "warmup_queries",
    "workload_seed",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Blank lines and `#` comments are skipped; keys may use `-` or `_`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", i + 1)))?;
            entries.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        let probe = IndexParams::new(1);
        for (k, v) in &entries {
            if !TOOL_KEYS.contains(&k.as_str()) {
                probe.clone().set(k, v)?;
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// `flag` if given, else the file's value, else `default`.
    pub fn layered<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(s) => s.parse().map_err(|_| Error::Config(format!("config {key}: cannot parse {s:?}"))),
            None => Ok(default),
        }
    }

    /// Like `layered` without a default.
    pub fn optional<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|s| s.parse().map_err(|_| Error::Config(format!("config {key}: cannot parse {s:?}"))))
            .transpose()
    }

    /// The index settings in the file, in key order.
    pub fn index_settings(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter(|(k, _)| !TOOL_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

/// Parses `key=value` command-line settings.
pub fn parse_setting(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    Ok((k.trim().replace('-', "_"), v.trim().to_string()))
}
