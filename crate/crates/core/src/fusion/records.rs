use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSpec, FusionSchema, Source};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RawValue {
    Num(f64),
    Text(String),
}

impl RawValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            RawValue::Num(v) => Some(*v),
            RawValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> String {
        match self {
            RawValue::Num(v) => v.to_string(),
            RawValue::Text(s) => s.clone(),
        }
    }
}

/// One input record before harmonization. `values` follows the declared
/// column order of the record's source schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub source: Source,
    pub values: Vec<RawValue>,
    pub raw_label: String,
    /// 1-based line number in the originating stream.
    pub line: usize,
}

fn read_lines(stream: impl BufRead) -> Result<Vec<(usize, String)>> {
    let mut lines = Vec::new();
    for (i, line) in stream.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    Ok(lines)
}

fn convert(field: &str, spec: &ColumnSpec, line: usize) -> Result<RawValue> {
    let field = field.trim();
    match spec.kind {
        ColumnKind::Categorical => Ok(RawValue::Text(field.to_string())),
        ColumnKind::Continuous => field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(RawValue::Num)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("column `{}`: `{field}` is not a finite number", spec.name),
            }),
    }
}

fn parse_ids_line(line_no: usize, line: &str, schema: &FusionSchema) -> Result<RawRecord> {
    let n = schema.ids_columns.len();
    let fields: Vec<&str> = line.split(',').collect();
    // Label, optionally followed by the NSL-KDD difficulty column.
    if fields.len() != n + 1 && fields.len() != n + 2 {
        return Err(Error::SchemaMismatch {
            line: line_no,
            expected: format!("{} or {}", n + 1, n + 2),
            found: fields.len(),
        });
    }
    let values = schema
        .ids_columns
        .iter()
        .zip(&fields)
        .map(|(spec, f)| convert(f, spec, line_no))
        .collect::<Result<Vec<_>>>()?;
    let raw_label = fields[n].trim().to_string();
    schema.map_label(&raw_label, Source::Ids)?;
    Ok(RawRecord {
        source: Source::Ids,
        values,
        raw_label,
        line: line_no,
    })
}

/// Headerless comma-separated KDD/NSL-KDD records.
pub fn parse_ids_records(stream: impl BufRead, schema: &FusionSchema) -> Result<Vec<RawRecord>> {
    let lines = read_lines(stream)?;
    lines
        .par_iter()
        .map(|(n, line)| parse_ids_line(*n, line, schema))
        .collect()
}

/// Parses a single IDS line, for per-line error reporting.
pub fn parse_ids_record(line_no: usize, line: &str, schema: &FusionSchema) -> Result<RawRecord> {
    parse_ids_line(line_no, line, schema)
}

/// UEBA records as CSV with a header row, or one JSON object per line.
pub fn parse_ueba_records(stream: impl BufRead, schema: &FusionSchema) -> Result<Vec<RawRecord>> {
    let lines = read_lines(stream)?;
    let Some((_, first)) = lines.first() else {
        return Ok(Vec::new());
    };
    if first.trim_start().starts_with('{') {
        lines
            .iter()
            .map(|(n, line)| parse_ueba_json_line(*n, line, schema))
            .collect()
    } else {
        let header = UebaHeader::parse(lines[0].0, &lines[0].1, schema)?;
        lines[1..]
            .iter()
            .map(|(n, line)| header.parse_line(*n, line, schema))
            .collect()
    }
}

/// Maps a CSV header onto the schema's UEBA column order.
pub struct UebaHeader {
    positions: Vec<usize>,
    label_position: usize,
    width: usize,
}

impl UebaHeader {
    pub fn parse(line_no: usize, header: &str, schema: &FusionSchema) -> Result<Self> {
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| {
            names.iter().position(|h| *h == name).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("UEBA header lacks column `{name}`"),
            })
        };
        let positions = schema
            .ueba_columns
            .iter()
            .map(|c| find(&c.name))
            .collect::<Result<Vec<_>>>()?;
        let label_position = find(&schema.ueba_label_column)?;
        Ok(Self {
            positions,
            label_position,
            width: names.len(),
        })
    }

    pub fn parse_line(&self, line_no: usize, line: &str, schema: &FusionSchema) -> Result<RawRecord> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != self.width {
            return Err(Error::SchemaMismatch {
                line: line_no,
                expected: self.width.to_string(),
                found: fields.len(),
            });
        }
        let values = schema
            .ueba_columns
            .iter()
            .zip(&self.positions)
            .map(|(spec, &p)| convert(fields[p], spec, line_no))
            .collect::<Result<Vec<_>>>()?;
        let raw_label = fields[self.label_position].trim().to_string();
        schema.map_label(&raw_label, Source::Ueba)?;
        Ok(RawRecord {
            source: Source::Ueba,
            values,
            raw_label,
            line: line_no,
        })
    }
}

pub fn parse_ueba_json_line(line_no: usize, line: &str, schema: &FusionSchema) -> Result<RawRecord> {
    let bad = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let obj: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let values = schema
        .ueba_columns
        .iter()
        .map(|spec| {
            let v = obj
                .get(&spec.name)
                .ok_or_else(|| bad(format!("missing field `{}`", spec.name)))?;
            let text = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => u8::from(*b).to_string(),
                other => return Err(bad(format!("field `{}` has unsupported value {other}", spec.name))),
            };
            convert(&text, spec, line_no)
        })
        .collect::<Result<Vec<_>>>()?;
    let raw_label = obj
        .get(&schema.ueba_label_column)
        .and_then(|v| v.as_str())
        .ok_or_else(|| bad(format!("missing string field `{}`", schema.ueba_label_column)))?
        .to_string();
    schema.map_label(&raw_label, Source::Ueba)?;
    Ok(RawRecord {
        source: Source::Ueba,
        values,
        raw_label,
        line: line_no,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::ThreatClass;

    // First record of the public NSL-KDD KDDTrain+ file with its label swapped
    // for a DoS attack, plus the difficulty column.
    const NEPTUNE_LINE: &str = "0,tcp,private,S0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,123,6,1.00,1.00,0.00,0.00,0.05,0.07,0.00,255,26,0.10,0.05,0.00,0.00,1.00,1.00,0.00,0.00,neptune,19";

    #[test]
    fn parses_kdd_line() {
        let schema = FusionSchema::default();
        let recs = parse_ids_records(NEPTUNE_LINE.as_bytes(), &schema).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.source, Source::Ids);
        assert_eq!(r.raw_label, "neptune");
        assert_eq!(r.values.len(), 41);
        assert_eq!(r.values[1], RawValue::Text("tcp".into()));
        assert_eq!(r.values[22], RawValue::Num(123.0));
        assert_eq!(schema.map_label(&r.raw_label, r.source).unwrap(), ThreatClass::DoS);
    }

    #[test]
    fn without_difficulty_column() {
        let line = NEPTUNE_LINE.rsplit_once(',').unwrap().0;
        let recs = parse_ids_records(line.as_bytes(), &FusionSchema::default()).unwrap();
        assert_eq!(recs[0].raw_label, "neptune");
    }

    #[test]
    fn empty_stream() {
        let schema = FusionSchema::default();
        assert!(parse_ids_records(&b""[..], &schema).unwrap().is_empty());
        assert!(parse_ueba_records(&b"\n\n"[..], &schema).unwrap().is_empty());
    }

    #[test]
    fn forty_fields_is_a_schema_mismatch() {
        let fields: Vec<&str> = NEPTUNE_LINE.split(',').take(40).collect();
        let text = format!("{NEPTUNE_LINE}\n{}\n", fields.join(","));
        let err = parse_ids_records(text.as_bytes(), &FusionSchema::default()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch { line: 2, found: 40, .. }), "{err}");
    }

    #[test]
    fn malformed_number_carries_line() {
        let bad = NEPTUNE_LINE.replacen("0,tcp", "zero,tcp", 1);
        let text = format!("{NEPTUNE_LINE}\n{NEPTUNE_LINE}\n{bad}\n");
        let err = parse_ids_records(text.as_bytes(), &FusionSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    fn ueba_csv(labels: &[&str]) -> String {
        let schema = FusionSchema::default();
        let mut header: Vec<String> = schema.ueba_columns.iter().map(|c| c.name.clone()).collect();
        header.push("label".into());
        let mut out = header.join(",") + "\n";
        for (i, l) in labels.iter().enumerate() {
            out.push_str(&format!("{i},1,2,0,3,1,0.5,0,0,analyst,finance,{l}\n"));
        }
        out
    }

    #[test]
    fn ueba_csv_in_order() {
        let text = ueba_csv(&["benign", "malicious", "Benign"]);
        let recs = parse_ueba_records(text.as_bytes(), &FusionSchema::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].raw_label, "benign");
        assert_eq!(recs[2].raw_label, "Benign");
        let counts: Vec<f64> = recs.iter().map(|r| r.values[0].as_num().unwrap()).collect();
        assert_eq!(counts, vec![0.0, 1.0, 2.0]);
        assert!(recs.iter().all(|r| r.source == Source::Ueba));
    }

    #[test]
    fn ueba_unmapped_label() {
        let text = ueba_csv(&["benign", "insider"]);
        let err = parse_ueba_records(text.as_bytes(), &FusionSchema::default()).unwrap_err();
        assert!(matches!(err, Error::UnmappedLabel { ref label, .. } if label == "insider"));
    }

    #[test]
    fn ueba_json_lines() {
        let line = r#"{"logon_count": 4, "after_hours_logons": 1, "distinct_hosts": 2, "usb_events": 0, "files_copied": 7, "external_emails": 1, "upload_mb": 2.5, "failed_logins": 0, "privilege_changes": 0, "role": "engineer", "department": "rnd", "label": "malicious"}"#;
        let recs = parse_ueba_records(line.as_bytes(), &FusionSchema::default()).unwrap();
        assert_eq!(recs[0].raw_label, "malicious");
        assert_eq!(recs[0].values[6], RawValue::Num(2.5));
        assert_eq!(recs[0].values[9], RawValue::Text("engineer".into()));
    }
}
