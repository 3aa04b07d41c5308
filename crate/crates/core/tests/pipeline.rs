use tabitd_core::fusion::synthetic::{synthetic_ids_records, synthetic_ueba_records, IdsMix};
use tabitd_core::fusion::{harmonize_split, FusionSchema, ThreatClass};
use tabitd_core::interpret::explain;
use tabitd_core::model::TabNetModel;
use tabitd_core::train::{compare_report, evaluate, train, TrainConfig};
use tabitd_core::encoder::EncoderConfig;

#[test]
fn synthetic_records_end_to_end() {
    let schema = FusionSchema::default();
    let ids = synthetic_ids_records(&IdsMix::uniform(120), 7, &schema);
    let ueba = synthetic_ueba_records(150, 150, 7, &schema);
    let (train_set, test_set) = harmonize_split(&ids, &ueba, &schema, 0.25, 7).unwrap();
    assert_eq!(train_set.schema.fingerprint(), test_set.schema.fingerprint());
    assert!(ThreatClass::ALL.iter().all(|&c| test_set.class_counts[c] > 0));

    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 256,
        virtual_batch: 64,
        lr_decay: 0.98,
        seed: 1,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, &EncoderConfig::default(), &cfg, None).unwrap();
    let report = evaluate(&outcome.model, &test_set).unwrap();
    assert!(report.accuracy > 0.8, "{}", report.to_text());
    assert!(report.detection_rate > 0.8);

    let bytes = outcome.model.to_bytes();
    let back = TabNetModel::from_bytes(&bytes).unwrap();
    assert_eq!(evaluate(&back, &test_set).unwrap(), report);

    let delta = compare_report(&report, "paper-ours-kdd-ueba").unwrap();
    assert_eq!(delta.rows.len(), 21);

    let explained = explain(&back, &test_set.features, 3).unwrap();
    assert_eq!(explained.m_agg.shape(), test_set.features.shape());
    assert!(explained.top_features.iter().all(|t| t.len() == 3));
}
