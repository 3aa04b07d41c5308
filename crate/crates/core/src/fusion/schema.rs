use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const SOURCE_INDICATOR: &str = "source_indicator";

const DEFAULT_SCHEMA: &str = include_str!("../../data/default_schema.toml");

/// The seven detection targets, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ThreatClass {
    Benign,
    DoS,
    Malicious,
    Normal,
    Probe,
    R2L,
    U2R,
}

impl ThreatClass {
    pub const COUNT: usize = 7;
    pub const ALL: [ThreatClass; 7] = [
        ThreatClass::Benign,
        ThreatClass::DoS,
        ThreatClass::Malicious,
        ThreatClass::Normal,
        ThreatClass::Probe,
        ThreatClass::R2L,
        ThreatClass::U2R,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ThreatClass::Benign => "Benign",
            ThreatClass::DoS => "DoS",
            ThreatClass::Malicious => "Malicious",
            ThreatClass::Normal => "Normal",
            ThreatClass::Probe => "Probe",
            ThreatClass::R2L => "R2L",
            ThreatClass::U2R => "U2R",
        }
    }

    /// The record source a class can originate from.
    pub fn source(self) -> Source {
        match self {
            ThreatClass::Benign | ThreatClass::Malicious => Source::Ueba,
            _ => Source::Ids,
        }
    }

    /// `Normal` and `Benign` form the negative side of the binary roll-up.
    pub fn is_attack(self) -> bool {
        !matches!(self, ThreatClass::Normal | ThreatClass::Benign)
    }
}

impl fmt::Display for ThreatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThreatClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown threat class `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "IDS")]
    Ids,
    #[serde(rename = "UEBA")]
    Ueba,
}

impl Source {
    pub fn indicator(self) -> f64 {
        match self {
            Source::Ids => 0.0,
            Source::Ueba => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Encoding frozen for one fused column once training statistics are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub std: f64,
}

fn one() -> f64 {
    1.0
}

fn default_label_column() -> String {
    "label".to_string()
}

/// One column of the fused feature space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Position in the IDS record, if the IDS schema declares this column.
    pub ids_position: Option<usize>,
    /// Position in the UEBA schema, if declared there.
    pub ueba_position: Option<usize>,
}

impl FusedColumn {
    pub fn position(&self, source: Source) -> Option<usize> {
        match source {
            Source::Ids => self.ids_position,
            Source::Ueba => self.ueba_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSchema {
    pub schema_version: u32,
    pub ids_columns: Vec<ColumnSpec>,
    pub ueba_columns: Vec<ColumnSpec>,
    #[serde(default = "default_label_column")]
    pub ueba_label_column: String,
    pub label_map_ids: BTreeMap<String, ThreatClass>,
    pub label_map_ueba: BTreeMap<String, ThreatClass>,
    /// Per fused column, populated by harmonization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub encoding: Vec<ColumnEncoding>,
}

impl Default for FusionSchema {
    fn default() -> Self {
        Self::from_toml(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }
}

impl FusionSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: FusionSchema =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Schema of `width − 1` continuous IDS columns `x0, x1, …` plus the
    /// source indicator, with the default label maps. Used for matrices that
    /// did not come from record ingestion.
    pub fn numeric(width: usize) -> Self {
        let base = Self::default();
        Self {
            ids_columns: (0..width.saturating_sub(1))
                .map(|i| ColumnSpec {
                    name: format!("x{i}"),
                    kind: ColumnKind::Continuous,
                })
                .collect(),
            ueba_columns: Vec::new(),
            encoding: Vec::new(),
            ..base
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (map, source) in [
            (&self.label_map_ids, Source::Ids),
            (&self.label_map_ueba, Source::Ueba),
        ] {
            for (raw, class) in map {
                if class.source() != source {
                    return Err(Error::Config(format!(
                        "{source:?} label `{raw}` maps to {class}, which only originates from {:?} records",
                        class.source()
                    )));
                }
                if normalize_label(raw) != *raw {
                    return Err(Error::Config(format!(
                        "label map key `{raw}` must be lowercase without a trailing period"
                    )));
                }
            }
        }
        let mut seen = BTreeMap::new();
        for (source, cols) in [(Source::Ids, &self.ids_columns), (Source::Ueba, &self.ueba_columns)] {
            let mut local = std::collections::BTreeSet::new();
            for c in cols {
                if c.name == SOURCE_INDICATOR {
                    return Err(Error::Config(format!("column name `{SOURCE_INDICATOR}` is reserved")));
                }
                if !local.insert(c.name.as_str()) {
                    return Err(Error::Config(format!("duplicate {source:?} column `{}`", c.name)));
                }
                if let Some(kind) = seen.insert(c.name.as_str(), c.kind) {
                    if kind != c.kind {
                        return Err(Error::Config(format!(
                            "column `{}` declared with different kinds in the IDS and UEBA schemas",
                            c.name
                        )));
                    }
                }
            }
        }
        if !self.encoding.is_empty() && self.encoding.len() != self.fused_width() {
            return Err(Error::Config(format!(
                "encoding has {} entries for {} fused columns",
                self.encoding.len(),
                self.fused_width()
            )));
        }
        Ok(())
    }

    /// Union of both column lists (IDS order first) followed by the source indicator.
    pub fn fused_columns(&self) -> Vec<FusedColumn> {
        let mut cols: Vec<FusedColumn> = self
            .ids_columns
            .iter()
            .enumerate()
            .map(|(i, c)| FusedColumn {
                name: c.name.clone(),
                kind: c.kind,
                ids_position: Some(i),
                ueba_position: None,
            })
            .collect();
        for (i, c) in self.ueba_columns.iter().enumerate() {
            match cols.iter_mut().find(|f| f.name == c.name) {
                Some(shared) => shared.ueba_position = Some(i),
                None => cols.push(FusedColumn {
                    name: c.name.clone(),
                    kind: c.kind,
                    ids_position: None,
                    ueba_position: Some(i),
                }),
            }
        }
        cols.push(FusedColumn {
            name: SOURCE_INDICATOR.to_string(),
            kind: ColumnKind::Categorical,
            ids_position: None,
            ueba_position: None,
        });
        cols
    }

    pub fn fused_width(&self) -> usize {
        self.fused_columns().len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.fused_columns().into_iter().map(|c| c.name).collect()
    }

    pub fn is_frozen(&self) -> bool {
        !self.encoding.is_empty()
    }

    pub fn columns(&self, source: Source) -> &[ColumnSpec] {
        match source {
            Source::Ids => &self.ids_columns,
            Source::Ueba => &self.ueba_columns,
        }
    }

    /// Resolves a raw label. Matching is case-insensitive and ignores the
    /// trailing period used by the KDD Cup 99 files.
    pub fn map_label(&self, raw: &str, source: Source) -> Result<ThreatClass> {
        let map = match source {
            Source::Ids => &self.label_map_ids,
            Source::Ueba => &self.label_map_ueba,
        };
        let key = normalize_label(raw);
        map.get(&key).copied().ok_or(Error::UnmappedLabel {
            label: raw.to_string(),
            origin: source,
        })
    }

    /// SHA-256 over the canonical TOML rendering, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

pub(crate) fn normalize_label(raw: &str) -> String {
    raw.trim().trim_end_matches('.').to_ascii_lowercase()
}
