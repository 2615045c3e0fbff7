//! Flat `key = value` config files and flag/file/default merging.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Keys accepted in config files; they mirror the long flag names.
pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "output",
    "targets",
    "sigma",
    "k",
    "dim",
    "mode",
    "select",
    "order",
    "ridge",
    "lambda",
    "method",
    "n-gen",
    "append",
    "denormalize",
    "scale-features",
    "provenance",
    "failure-budget",
    "seed",
    "workers",
    "kind",
    "n",
    "noise-sd",
    "curvature",
    "intrinsic-d",
    "ambient-d",
    "curve",
    "scales",
    "seeds",
    "anchors",
    "curvatures",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

impl ConfigFile {
    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped; keys may use `-` or `_`; values may be double-quoted.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    i + 1
                )));
            };
            let key = normalize_key(key);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key '{key}'", i + 1)));
            }
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value)
                .to_string();
            if values.insert(key.clone(), value).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flag value if given, else the parsed config value, else `None`.
    pub fn pick<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| CliError::Config(format!("config key '{key}': cannot parse '{raw}': {e}")))
            })
            .transpose()
    }

    /// Like [`ConfigFile::pick`] with a built-in default.
    pub fn pick_or<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(key, flag)?.unwrap_or(default))
    }
}

/// Parses a comma-separated list, ignoring surrounding whitespace.
pub fn parse_list<T>(raw: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::Config(format!("{what}: cannot parse '{s}': {e}")))
        })
        .collect()
}
