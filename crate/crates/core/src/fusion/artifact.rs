//! Versioned binary container for [`FusedDataset`] (magic `TITD`).

use std::path::Path;

use super::dataset::FusedDataset;
use super::schema::{FusionSchema, Source, ThreatClass};
use crate::container::{
    bytes_to_f64s, bytes_to_u64s, f64s_to_bytes, u64s_to_bytes, utf8, ContainerReader, ContainerWriter,
};
use crate::diff::Tensor2;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"TITD";
pub const DATASET_FORMAT_VERSION: u32 = 1;

impl FusedDataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ContainerWriter::new(DATASET_MAGIC, DATASET_FORMAT_VERSION);
        w.section(b"SCHM", self.schema.to_toml().as_bytes());
        w.section(
            b"SHAP",
            &u64s_to_bytes(&[self.features.rows() as u64, self.features.cols() as u64]),
        );
        w.section(b"FEAT", &f64s_to_bytes(self.features.data()));
        let labels: Vec<u8> = self.labels.iter().map(|l| l.index() as u8).collect();
        w.section(b"LABL", &labels);
        let sources: Vec<u8> = self.sources.iter().map(|s| *s as u8).collect();
        w.section(b"SRCE", &sources);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = ContainerReader::open(bytes, DATASET_MAGIC)?;
        if version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {version} is not supported (expected {DATASET_FORMAT_VERSION})"
            )));
        }
        let schema = FusionSchema::from_toml(utf8(r.section(b"SCHM")?)?)?;
        let shape = bytes_to_u64s(r.section(b"SHAP")?)?;
        let [rows, cols] = shape[..] else {
            return Err(Error::Format("shape section must hold two integers".into()));
        };
        let features = Tensor2::from_vec(rows as usize, cols as usize, bytes_to_f64s(r.section(b"FEAT")?)?)?;
        let labels = r
            .section(b"LABL")?
            .iter()
            .map(|&b| ThreatClass::from_index(b as usize).ok_or_else(|| Error::Format(format!("bad label byte {b}"))))
            .collect::<Result<Vec<_>>>()?;
        let sources = r
            .section(b"SRCE")?
            .iter()
            .map(|&b| match b {
                0 => Ok(Source::Ids),
                1 => Ok(Source::Ueba),
                _ => Err(Error::Format(format!("bad source byte {b}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        FusedDataset::new(features, labels, sources, schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::synthetic::{synthetic_ids_records, synthetic_ueba_records, IdsMix};
    use crate::fusion::harmonize;
    use proptest::prelude::*;

    fn sample(seed: u64) -> FusedDataset {
        let schema = FusionSchema::default();
        let ids = synthetic_ids_records(&IdsMix::uniform(6), seed, &schema);
        let ueba = synthetic_ueba_records(5, 3, seed, &schema);
        harmonize(&ids, &ueba, &schema).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_identical(seed in 0u64..10_000) {
            let d = sample(seed);
            let bytes = d.to_bytes();
            let back = FusedDataset::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.features.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            d.features.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        let bytes = sample(1).to_bytes();
        assert!(FusedDataset::from_bytes(b"NOPE\x01\0\0\0").is_err());
        assert!(FusedDataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut future = bytes.clone();
        future[4] = 99;
        assert!(matches!(FusedDataset::from_bytes(&future), Err(Error::Format(_))));
    }
}
