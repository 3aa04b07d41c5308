//! Run configuration: built-in defaults, then a TOML file, then command-line
//! overrides. Every leaf remembers which layer set it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use tabitd_core::decoder::PretrainConfig;
use tabitd_core::encoder::EncoderConfig;
use tabitd_core::train::TrainConfig;
use tabitd_core::{Error, Result};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Default,
    File(PathBuf),
    CommandLine,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::File(p) => write!(f, "file {}", p.display()),
            Origin::CommandLine => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub pretrain: PretrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub settings: Settings,
    /// Dotted key to the layer that set it.
    pub sources: BTreeMap<String, Origin>,
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn insert(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| bad_key(key))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(bad_key(key)),
        };
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

fn bad_key(key: &str) -> Error {
    Error::Config(format!("`{key}` is not a configuration key"))
}

/// Parses a `key=value` override; the value is read as TOML and falls back
/// to a bare string.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override `{raw}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((key, parsed))
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let defaults = Table::try_from(Settings::default())
            .map_err(|e| Error::Config(format!("cannot render defaults: {e}")))?;
        let mut merged = defaults.clone();
        let mut leaves = Vec::new();
        flatten("", &defaults, &mut leaves);
        let mut sources: BTreeMap<String, Origin> =
            leaves.into_iter().map(|(k, _)| (k, Origin::Default)).collect();

        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let table: Table = text
                .parse()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut leaves = Vec::new();
            flatten("", &table, &mut leaves);
            for (k, v) in leaves {
                insert(&mut merged, &k, v)?;
                sources.insert(k, Origin::File(path.to_path_buf()));
            }
        }
        for (k, v) in overrides {
            insert(&mut merged, k, v.clone())?;
            sources.insert(k.clone(), Origin::CommandLine);
        }

        let settings: Settings = Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        settings.encoder.validate()?;
        settings.train.validate()?;
        settings.pretrain.validate()?;
        Ok(Self { settings, sources })
    }

    /// Logs every resolved key with its value and origin.
    pub fn log(&self) {
        let rendered = Table::try_from(&self.settings).unwrap_or_default();
        let mut leaves = Vec::new();
        flatten("", &rendered, &mut leaves);
        for (k, v) in leaves {
            let origin = self.sources.get(&k).cloned().unwrap_or(Origin::Default);
            info!("config {k} = {v} ({origin})");
        }
    }
}
