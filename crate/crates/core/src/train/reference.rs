use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::MetricsReport;
use crate::error::{Error, Result};
use crate::fusion::ThreatClass;

const TABLES: &str = include_str!("../../data/reference_tables.toml");

/// Published per-class results of one method on one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub name: String,
    pub method: String,
    pub dataset: String,
    pub precision: [f64; ThreatClass::COUNT],
    pub recall: [f64; ThreatClass::COUNT],
    pub f1: [f64; ThreatClass::COUNT],
    /// Headline average accuracy, where one was published.
    pub accuracy: Option<f64>,
}

#[derive(Deserialize)]
struct TableFile {
    table: Vec<ReferenceTable>,
}

pub fn reference_tables() -> &'static [ReferenceTable] {
    static CELL: OnceLock<Vec<ReferenceTable>> = OnceLock::new();
    CELL.get_or_init(|| {
        toml::from_str::<TableFile>(TABLES)
            .expect("bundled reference tables parse")
            .table
    })
}

pub fn reference_table(name: &str) -> Result<&'static ReferenceTable> {
    reference_tables().iter().find(|t| t.name == name).ok_or_else(|| {
        let known: Vec<&str> = reference_tables().iter().map(|t| t.name.as_str()).collect();
        Error::Config(format!("unknown reference `{name}`; known: {}", known.join(", ")))
    })
}

impl ReferenceTable {
    pub fn value(&self, class: ThreatClass, metric: &str) -> Option<f64> {
        let row = match metric {
            "precision" => &self.precision,
            "recall" => &self.recall,
            "f1" => &self.f1,
            _ => return None,
        };
        Some(row[class.index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub class: ThreatClass,
    pub metric: String,
    /// `None` when the class is not applicable in our report.
    pub ours: Option<f64>,
    pub reference: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub reference: String,
    pub rows: Vec<DeltaRow>,
    pub ours_accuracy: f64,
    /// Published accuracy, an aspirational target rather than a comparable
    /// number: the published corpora are not available.
    pub reference_accuracy: Option<f64>,
}

/// Per-class, per-metric `ours − reference`.
pub fn compare_report(ours: &MetricsReport, reference: &str) -> Result<DeltaTable> {
    let table = reference_table(reference)?;
    let mut rows = Vec::with_capacity(3 * ThreatClass::COUNT);
    for class in ThreatClass::ALL {
        let m = ours.class(class);
        for metric in ["precision", "recall", "f1"] {
            let value = m.map(|m| match metric {
                "precision" => m.precision,
                "recall" => m.recall,
                _ => m.f1,
            });
            let reference = table.value(class, metric).expect("known metric");
            rows.push(DeltaRow {
                class,
                metric: metric.to_string(),
                ours: value,
                reference,
                delta: value.map(|v| v - reference),
            });
        }
    }
    Ok(DeltaTable {
        reference: table.name.clone(),
        rows,
        ours_accuracy: ours.accuracy,
        reference_accuracy: table.accuracy,
    })
}

impl DeltaTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,metric,ours,reference,delta\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{}",
                r.class.name(),
                r.metric,
                fmt(r.ours),
                r.reference,
                fmt(r.delta)
            );
        }
        let _ = writeln!(
            s,
            "all,accuracy (aspirational),{:.4},{},{}",
            self.ours_accuracy,
            fmt(self.reference_accuracy),
            fmt(self.reference_accuracy.map(|a| self.ours_accuracy - a))
        );
        s
    }
}
