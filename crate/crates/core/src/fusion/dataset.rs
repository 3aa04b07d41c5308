use std::collections::BTreeSet;
use std::ops::Index;

use super::records::{RawRecord, RawValue};
use super::sampling::stratified_partition;
use super::schema::{ColumnEncoding, ColumnKind, FusedColumn, FusionSchema, Source, ThreatClass};
use crate::diff::Tensor2;
use crate::error::{Error, Result};

/// Per-class sample counts indexed by [`ThreatClass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts([usize; ThreatClass::COUNT]);

impl ClassCounts {
    pub fn from_labels(labels: &[ThreatClass]) -> Self {
        let mut counts = [0; ThreatClass::COUNT];
        for l in labels {
            counts[l.index()] += 1;
        }
        Self(counts)
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ThreatClass, usize)> + '_ {
        ThreatClass::ALL.iter().map(|&c| (c, self.0[c.index()]))
    }

    pub fn present(&self) -> impl Iterator<Item = ThreatClass> + '_ {
        self.iter().filter(|(_, n)| *n > 0).map(|(c, _)| c)
    }
}

impl Index<ThreatClass> for ClassCounts {
    type Output = usize;

    fn index(&self, c: ThreatClass) -> &usize {
        &self.0[c.index()]
    }
}

/// Harmonized feature matrix with one label and one provenance tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDataset {
    pub features: Tensor2,
    pub labels: Vec<ThreatClass>,
    pub sources: Vec<Source>,
    pub schema: FusionSchema,
    pub class_counts: ClassCounts,
}

impl FusedDataset {
    pub fn new(
        features: Tensor2,
        labels: Vec<ThreatClass>,
        sources: Vec<Source>,
        schema: FusionSchema,
    ) -> Result<Self> {
        if labels.len() != features.rows() || sources.len() != features.rows() {
            return Err(Error::dim("FusedDataset", features.rows(), labels.len()));
        }
        if features.cols() != schema.fused_width() {
            return Err(Error::dim("FusedDataset columns", schema.fused_width(), features.cols()));
        }
        if !features.is_finite() {
            return Err(Error::NumericOverflow {
                stage: "dataset features".into(),
            });
        }
        let class_counts = ClassCounts::from_labels(&labels);
        Ok(Self {
            features,
            labels,
            sources,
            schema,
            class_counts,
        })
    }

    /// Wraps a ready numeric matrix under [`FusionSchema::numeric`]; each
    /// row's source follows its label.
    pub fn from_matrix(features: Tensor2, labels: Vec<ThreatClass>) -> Result<Self> {
        let schema = FusionSchema::numeric(features.cols());
        let sources = labels.iter().map(|l| l.source()).collect();
        Self::new(features, labels, sources, schema)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let labels: Vec<ThreatClass> = rows.iter().map(|&r| self.labels[r]).collect();
        Self {
            features: self.features.select_rows(rows),
            class_counts: ClassCounts::from_labels(&labels),
            labels,
            sources: rows.iter().map(|&r| self.sources[r]).collect(),
            schema: self.schema.clone(),
        }
    }
}

/// Harmonizes both record lists, treating all of them as the training portion
/// for normalization statistics.
pub fn harmonize(ids: &[RawRecord], ueba: &[RawRecord], schema: &FusionSchema) -> Result<FusedDataset> {
    let records: Vec<&RawRecord> = ids.iter().chain(ueba).collect();
    let train: Vec<usize> = (0..records.len()).collect();
    let frozen = fit_encoding(schema, &records, &train)?;
    encode(&records, &frozen)
}

/// Stratified split of the raw records, then harmonization with statistics fit
/// on the training rows only. Category vocabularies span all rows.
pub fn harmonize_split(
    ids: &[RawRecord],
    ueba: &[RawRecord],
    schema: &FusionSchema,
    test_fraction: f64,
    seed: u64,
) -> Result<(FusedDataset, FusedDataset)> {
    let records: Vec<&RawRecord> = ids.iter().chain(ueba).collect();
    let labels = records
        .iter()
        .map(|r| schema.map_label(&r.raw_label, r.source))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, test_idx) = stratified_partition(&labels, test_fraction, seed)?;
    let frozen = fit_encoding(schema, &records, &train_idx)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i]).collect::<Vec<_>>();
    let train = encode(&pick(&train_idx), &frozen)?;
    let test = if test_idx.is_empty() {
        FusedDataset::new(
            Tensor2::zeros(0, frozen.fused_width()),
            Vec::new(),
            Vec::new(),
            frozen.clone(),
        )?
    } else {
        encode(&pick(&test_idx), &frozen)?
    };
    Ok((train, test))
}

fn value_at<'a>(record: &'a RawRecord, col: &FusedColumn) -> Option<&'a RawValue> {
    col.position(record.source).map(|p| &record.values[p])
}

fn check_arity(records: &[&RawRecord], schema: &FusionSchema) -> Result<()> {
    for r in records {
        let expected = schema.columns(r.source).len();
        if r.values.len() != expected {
            return Err(Error::SchemaMismatch {
                line: r.line,
                expected: expected.to_string(),
                found: r.values.len(),
            });
        }
    }
    Ok(())
}

/// Computes per-column vocabularies (all rows) and z-score statistics (the
/// `train` rows where the column's source declares it).
fn fit_encoding(schema: &FusionSchema, records: &[&RawRecord], train: &[usize]) -> Result<FusionSchema> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    schema.validate()?;
    check_arity(records, schema)?;
    let columns = schema.fused_columns();
    let last = columns.len() - 1;
    let mut encoding = Vec::with_capacity(columns.len());
    for (ci, col) in columns.iter().enumerate() {
        if ci == last {
            encoding.push(ColumnEncoding {
                name: col.name.clone(),
                vocabulary: vec!["IDS".into(), "UEBA".into()],
                mean: 0.0,
                std: 1.0,
            });
            continue;
        }
        match col.kind {
            ColumnKind::Categorical => {
                let vocab: BTreeSet<String> = records
                    .iter()
                    .filter_map(|r| value_at(r, col))
                    .map(RawValue::as_text)
                    .collect();
                encoding.push(ColumnEncoding {
                    name: col.name.clone(),
                    vocabulary: vocab.into_iter().collect(),
                    mean: 0.0,
                    std: 1.0,
                });
            }
            ColumnKind::Continuous => {
                let values: Vec<f64> = train
                    .iter()
                    .filter_map(|&i| value_at(records[i], col))
                    .filter_map(RawValue::as_num)
                    .collect();
                let (mean, std) = mean_std(&values);
                encoding.push(ColumnEncoding {
                    name: col.name.clone(),
                    vocabulary: Vec::new(),
                    mean,
                    // Constant (or absent) columns are centred but not scaled.
                    std: if std > 0.0 { std } else { 1.0 },
                });
            }
        }
    }
    let mut frozen = schema.clone();
    frozen.encoding = encoding;
    Ok(frozen)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Encodes one record into a fused row under a frozen schema.
pub fn encode_record(record: &RawRecord, schema: &FusionSchema, columns: &[FusedColumn]) -> Result<Vec<f64>> {
    let expected = schema.columns(record.source).len();
    if record.values.len() != expected {
        return Err(Error::SchemaMismatch {
            line: record.line,
            expected: expected.to_string(),
            found: record.values.len(),
        });
    }
    let last = columns.len() - 1;
    let mut row = vec![0.0; columns.len()];
    for (ci, col) in columns.iter().enumerate() {
        let enc = &schema.encoding[ci];
        if ci == last {
            row[ci] = record.source.indicator();
            continue;
        }
        let Some(value) = value_at(record, col) else {
            continue;
        };
        row[ci] = match col.kind {
            ColumnKind::Categorical => {
                let text = value.as_text();
                enc.vocabulary
                    .binary_search(&text)
                    .map_err(|_| Error::Parse {
                        line: record.line,
                        message: format!("column `{}`: unseen category `{text}`", col.name),
                    })? as f64
            }
            ColumnKind::Continuous => {
                let v = value.as_num().ok_or_else(|| Error::Parse {
                    line: record.line,
                    message: format!("column `{}` expects a number", col.name),
                })?;
                (v - enc.mean) / enc.std
            }
        };
    }
    Ok(row)
}

/// Encodes records under an already frozen schema.
pub fn encode(records: &[&RawRecord], frozen: &FusionSchema) -> Result<FusedDataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !frozen.is_frozen() {
        return Err(Error::Usage("schema has no frozen encoding".into()));
    }
    let columns = frozen.fused_columns();
    let mut data = Vec::with_capacity(records.len() * columns.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        data.extend(encode_record(r, frozen, &columns)?);
        labels.push(frozen.map_label(&r.raw_label, r.source)?);
    }
    let features = Tensor2::from_vec(records.len(), columns.len(), data)?;
    FusedDataset::new(
        features,
        labels,
        records.iter().map(|r| r.source).collect(),
        frozen.clone(),
    )
}
