//! Seeded random oversampling and stratified splitting.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::FusedDataset;
use super::schema::ThreatClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    /// Every class is topped up to at least this fraction of the largest class.
    pub floor_fraction: f64,
}

impl ResampleSpec {
    pub fn new(floor_fraction: f64) -> Result<Self> {
        let spec = Self { floor_fraction };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor_fraction > 0.0 && self.floor_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "floor_fraction must be in (0, 1], got {}",
                self.floor_fraction
            )));
        }
        Ok(())
    }

    /// Minimum per-class count for a given majority count.
    pub fn target(&self, majority: usize) -> usize {
        // Guard against `0.1 * 1000 = 100.00000000000001`-style rounding.
        (self.floor_fraction * majority as f64 - 1e-9).ceil().max(1.0) as usize
    }
}

/// Random oversampling with replacement. Original rows are all kept; the
/// output order is a seeded shuffle.
pub fn resample(data: &FusedDataset, spec: &ResampleSpec, seed: u64) -> Result<FusedDataset> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let majority = data.class_counts.iter().map(|(_, n)| n).max().unwrap_or(0);
    let target = spec.target(majority);
    let mut rows: Vec<usize> = (0..data.len()).collect();
    for class in ThreatClass::ALL {
        let members: Vec<usize> = (0..data.len()).filter(|&r| data.labels[r] == class).collect();
        if members.is_empty() {
            continue;
        }
        for _ in members.len()..target {
            rows.push(members[rng.gen_range(0..members.len())]);
        }
    }
    rows.shuffle(&mut rng);
    Ok(data.select(&rows))
}

/// Per-class row partition. Each class contributes `round(n · test_fraction)`
/// rows to the test side, capped so at least one stays in training; singleton
/// classes stay in training. Both index lists come back sorted.
pub fn stratified_partition(
    labels: &[ThreatClass],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in ThreatClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == class).collect();
        match members.len() {
            0 => continue,
            1 => {
                warn!("class {class} has a single sample; keeping it in the training split");
                train.extend(members);
                continue;
            }
            n => {
                members.shuffle(&mut rng);
                let n_test = ((n as f64 * test_fraction).round() as usize).min(n - 1);
                test.extend_from_slice(&members[..n_test]);
                train.extend_from_slice(&members[n_test..]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &FusedDataset, test_fraction: f64, seed: u64) -> Result<(FusedDataset, FusedDataset)> {
    let (train, test) = stratified_partition(&data.labels, test_fraction, seed)?;
    Ok((data.select(&train), data.select(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor2;
    use crate::fusion::{FusionSchema, Source};
    use proptest::prelude::*;

    fn dataset(counts: &[(ThreatClass, usize)]) -> FusedDataset {
        let schema = FusionSchema::default();
        let width = schema.fused_width();
        let mut labels = Vec::new();
        for &(c, n) in counts {
            labels.extend(std::iter::repeat(c).take(n));
        }
        let n = labels.len();
        let mut features = Tensor2::zeros(n, width);
        for r in 0..n {
            // row id in column 0 lets tests track rows through resampling
            features.set(r, 0, r as f64);
        }
        let sources = labels.iter().map(|c| c.source()).collect();
        FusedDataset::new(features, labels, sources, schema).unwrap()
    }

    #[test]
    fn minority_class_topped_up() {
        let d = dataset(&[(ThreatClass::Normal, 1000), (ThreatClass::U2R, 10)]);
        let out = resample(&d, &ResampleSpec::new(0.1).unwrap(), 1).unwrap();
        assert_eq!(out.class_counts[ThreatClass::U2R], 100);
        assert_eq!(out.class_counts[ThreatClass::Normal], 1000);
    }

    #[test]
    fn balanced_is_a_fixed_point() {
        let d = dataset(&[(ThreatClass::Normal, 50), (ThreatClass::DoS, 50)]);
        let out = resample(&d, &ResampleSpec::new(1.0).unwrap(), 9).unwrap();
        assert_eq!(out.class_counts, d.class_counts);
    }

    #[test]
    fn resample_is_deterministic() {
        let d = dataset(&[(ThreatClass::Normal, 200), (ThreatClass::R2L, 7)]);
        let spec = ResampleSpec::new(0.5).unwrap();
        assert_eq!(resample(&d, &spec, 4).unwrap(), resample(&d, &spec, 4).unwrap());
        assert_ne!(resample(&d, &spec, 4).unwrap().features, resample(&d, &spec, 5).unwrap().features);
    }

    #[test]
    fn rejects_bad_floor() {
        assert!(ResampleSpec::new(0.0).is_err());
        assert!(ResampleSpec::new(1.5).is_err());
    }

    #[test]
    fn stratified_arithmetic() {
        let d = dataset(&[(ThreatClass::Normal, 50), (ThreatClass::DoS, 50)]);
        let (train, test) = split(&d, 0.2, 0).unwrap();
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 80);
        assert_eq!(test.class_counts[ThreatClass::Normal], 10);
        assert_eq!(test.class_counts[ThreatClass::DoS], 10);
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let d = dataset(&[(ThreatClass::Normal, 5)]);
        assert!(split(&d, 0.0, 0).is_err());
        assert!(split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn singleton_class_stays_in_train() {
        let d = dataset(&[(ThreatClass::Normal, 10), (ThreatClass::U2R, 1)]);
        let (train, test) = split(&d, 0.5, 0).unwrap();
        assert_eq!(train.class_counts[ThreatClass::U2R], 1);
        assert_eq!(test.class_counts[ThreatClass::U2R], 0);
    }

    #[test]
    fn split_is_deterministic() {
        let d = dataset(&[(ThreatClass::Normal, 30), (ThreatClass::Probe, 12)]);
        assert_eq!(split(&d, 0.3, 8).unwrap(), split(&d, 0.3, 8).unwrap());
    }

    proptest! {
        #[test]
        fn resampling_keeps_every_row(minority in 1usize..20, majority in 20usize..200, floor in 0.01f64..1.0, seed in 0u64..1000) {
            let d = dataset(&[(ThreatClass::Normal, majority), (ThreatClass::U2R, minority)]);
            let out = resample(&d, &ResampleSpec::new(floor).unwrap(), seed).unwrap();
            prop_assert!(out.len() >= d.len());
            let mut seen = vec![false; d.len()];
            for r in 0..out.len() {
                seen[out.features.get(r, 0) as usize] = true;
            }
            prop_assert!(seen.iter().all(|&s| s));
            let target = (floor * majority as f64 - 1e-9).ceil() as usize;
            prop_assert_eq!(out.class_counts[ThreatClass::U2R], minority.max(target));
            prop_assert!(out.sources.iter().zip(&out.labels).all(|(s, l)| *s == l.source()));
            prop_assert!(out.sources.iter().all(|s| matches!(s, Source::Ids | Source::Ueba)));
        }

        #[test]
        fn split_is_a_partition(n_a in 2usize..60, n_b in 2usize..60, frac in 0.05f64..0.95, seed in 0u64..1000) {
            let d = dataset(&[(ThreatClass::Normal, n_a), (ThreatClass::DoS, n_b)]);
            let (train, test) = split(&d, frac, seed).unwrap();
            let mut ids: Vec<usize> = (0..train.len()).map(|r| train.features.get(r, 0) as usize)
                .chain((0..test.len()).map(|r| test.features.get(r, 0) as usize)).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..d.len()).collect::<Vec<_>>());
            for (class, n) in [(ThreatClass::Normal, n_a), (ThreatClass::DoS, n_b)] {
                let share = test.class_counts[class] as f64;
                prop_assert!((share - n as f64 * frac).abs() <= 1.0);
            }
        }
    }
}
