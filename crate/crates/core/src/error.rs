use std::path::PathBuf;

use crate::fusion::Source;
use crate::train::Divergence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("degenerate batch: train-mode batch norm needs at least 2 rows, got {rows}")]
    DegenerateBatch { rows: usize },

    #[error("gradient probe failed: loss is not finite at coordinate {coordinate}")]
    Probe { coordinate: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: schema mismatch, expected {expected} fields, found {found}")]
    SchemaMismatch {
        line: usize,
        expected: String,
        found: usize,
    },

    #[error("unmapped {origin:?} label `{label}`")]
    UnmappedLabel { label: String, origin: Source },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("config error: {0}")]
    Config(String),

    #[error("column `{column}` has zero variance")]
    ZeroVariance { column: String },

    #[error("non-finite value produced in {stage}")]
    NumericOverflow { stage: String },

    #[error("feature width {found} does not match the model schema width {expected}")]
    Width { expected: usize, found: usize },

    #[error("training diverged: {0}")]
    Diverged(Box<Divergence>),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("schema fingerprint mismatch: model {model}, dataset {dataset}")]
    FingerprintMismatch { model: String, dataset: String },

    #[error("invalid container: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
