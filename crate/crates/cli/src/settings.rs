//! `key=value` run settings: defaults, then a config file, then flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Name of the resolved settings file written next to every run's outputs.
pub const RESOLVED_FILE: &str = "config.txt";

/// A recognized key; `None` marks a key that must be supplied.
pub type KeyDecl = (&'static str, Option<&'static str>);

/// Parses `key=value` lines; blank lines and text after `#` are ignored.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value, got {raw:?}", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", n + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    /// Layers defaults, the optional config file and flag overrides. Unknown
    /// keys and keys left unset are usage errors naming the key.
    pub fn resolve(
        keys: &[KeyDecl],
        config: Option<&Path>,
        overrides: &[(&'static str, Option<String>)],
    ) -> CliResult<Self> {
        let mut values: BTreeMap<&'static str, Option<String>> =
            keys.iter().map(|&(k, d)| (k, d.map(str::to_string))).collect();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
            for (key, value) in parse_config(&text)? {
                let slot = keys
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|(k, _)| *k)
                    .ok_or_else(|| CliError::usage(format!("config {}: unknown key `{key}`", path.display())))?;
                values.insert(slot, Some(value));
            }
        }
        for (key, value) in overrides {
            if let Some(v) = value {
                values.insert(key, Some(v.clone()));
            }
        }
        let mut resolved = BTreeMap::new();
        for (key, value) in values {
            let value = value.ok_or_else(|| CliError::usage(format!("missing required setting `{key}`")))?;
            resolved.insert(key, value);
        }
        Ok(Settings { values: resolved })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("setting `{key}` is not declared"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| CliError::usage(format!("invalid setting `{key}` = {raw:?}: {e}")))
    }

    /// `none` maps to `None`.
    pub fn optional<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        if self.raw(key) == "none" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    /// Every key except the output location, one per line, sorted.
    pub fn to_config_text(&self) -> String {
        self.values.iter().filter(|(k, _)| **k != "out").map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
