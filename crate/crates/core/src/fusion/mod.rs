//! Ingestion of IDS flow records and UEBA behaviour records into one
//! seven-class feature space.
//!
//! Columns are the union of both sources' declared columns plus a binary
//! source indicator. Cells a record's source does not declare are zero after
//! encoding. Continuous columns are z-scored with statistics from the training
//! rows that carry the column; categorical columns are integer-coded against a
//! sorted vocabulary. Both are frozen into the schema so later inputs encode
//! identically.

mod artifact;
mod dataset;
mod records;
mod sampling;
mod schema;
pub mod synthetic;

pub use artifact::{DATASET_FORMAT_VERSION, DATASET_MAGIC};
pub use dataset::{encode, encode_record, harmonize, harmonize_split, ClassCounts, FusedDataset};
pub use records::{
    parse_ids_record, parse_ids_records, parse_ueba_json_line, parse_ueba_records, RawRecord,
    RawValue, UebaHeader,
};
pub use sampling::{resample, split, stratified_partition, ResampleSpec};
pub use schema::{
    ColumnEncoding, ColumnKind, ColumnSpec, FusedColumn, FusionSchema, Source, ThreatClass,
    SCHEMA_VERSION, SOURCE_INDICATOR,
};
