//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are skipped. Keys may appear at
//! most once.

use std::path::Path;

use crate::error::{Error, Result};
use crate::forest::{BandwidthPolicy, ForestConfig, SplitMode};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based line number.
    pub line: usize,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Config(format!(
                "line {}: key `{key}` already set on line {}",
                i + 1,
                prev.line
            )));
        }
        out.push(Entry {
            key,
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_entries(&text)
}

pub fn unknown_key(key: &str, valid: &[&str]) -> Error {
    Error::Config(format!("unknown key `{key}`; valid keys: {}", valid.join(", ")))
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

pub const FOREST_KEYS: &[&str] = &[
    "num_trees",
    "num_groups",
    "subsample_exponent",
    "mtry",
    "min_node_size",
    "split_alpha",
    "num_features",
    "bandwidth",
    "split_mode",
    "seed",
];

/// Applies one forest key. Returns `false` if `key` is not a forest key.
pub fn set_forest_key(cfg: &mut ForestConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "num_trees" => cfg.num_trees = parse_value(key, value)?,
        "num_groups" => cfg.num_groups = parse_value(key, value)?,
        "subsample_exponent" => cfg.subsample_exponent = parse_value(key, value)?,
        "mtry" => {
            cfg.mtry = match value {
                "auto" => None,
                v => Some(parse_value(key, v)?),
            }
        }
        "min_node_size" => cfg.min_node_size = parse_value(key, value)?,
        "split_alpha" => cfg.alpha = parse_value(key, value)?,
        "num_features" => cfg.num_features = parse_value(key, value)?,
        "bandwidth" => {
            cfg.bandwidth = match value {
                "median" => BandwidthPolicy::Median,
                v => BandwidthPolicy::Fixed(parse_value(key, v)?),
            }
        }
        "split_mode" => {
            cfg.split_mode = match value {
                "features" => SplitMode::Features,
                "exact" => SplitMode::Exact,
                v => return Err(Error::Config(format!("bad split_mode `{v}` (expected features or exact)"))),
            }
        }
        "seed" => cfg.seed = parse_value(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Forest settings from text; keys not listed in [`FOREST_KEYS`] are errors.
pub fn forest_config_from_str(text: &str) -> Result<ForestConfig> {
    let mut cfg = ForestConfig::default();
    for e in parse_entries(text)? {
        if !set_forest_key(&mut cfg, &e.key, &e.value)? {
            return Err(unknown_key(&e.key, FOREST_KEYS));
        }
    }
    Ok(cfg)
}

pub fn load_forest_config(path: impl AsRef<Path>) -> Result<ForestConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    forest_config_from_str(&text)
}
