use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusedDataset, ThreatClass};
use crate::model::TabNetModel;

const K: usize = ThreatClass::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True samples of the class.
    pub support: usize,
}

/// Metrics of one class; `None` when the class occurs neither in the truth
/// nor in the predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: ThreatClass,
    pub metrics: Option<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Rows are true classes, columns predicted classes, both in class order.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassRow>,
    pub total: usize,
    pub accuracy: f64,
    /// Attack samples predicted as any attack class, over all attack samples.
    pub detection_rate: f64,
    /// Benign samples predicted as any attack class, over all benign samples.
    pub false_alarm_rate: f64,
    pub false_negative_rate: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_predictions(truth: &[ThreatClass], predicted: &[ThreatClass]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim("MetricsReport", truth.len(), predicted.len()));
        }
        if truth.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut confusion = vec![vec![0usize; K]; K];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..K).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassRow> = ThreatClass::ALL
            .iter()
            .map(|&class| {
                let c = class.index();
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let metrics = (support + predicted > 0).then(|| {
                    let precision = ratio(tp, predicted);
                    let recall = ratio(tp, support);
                    let f1 = if precision + recall > 0.0 {
                        2.0 * precision * recall / (precision + recall)
                    } else {
                        0.0
                    };
                    ClassMetrics {
                        precision,
                        recall,
                        f1,
                        support,
                    }
                });
                ClassRow { class, metrics }
            })
            .collect();

        let (mut attacks, mut caught, mut benign, mut alarms) = (0, 0, 0, 0);
        for t in ThreatClass::ALL {
            for p in ThreatClass::ALL {
                let n = confusion[t.index()][p.index()];
                if t.is_attack() {
                    attacks += n;
                    if p.is_attack() {
                        caught += n;
                    }
                } else {
                    benign += n;
                    if p.is_attack() {
                        alarms += n;
                    }
                }
            }
        }
        let detection_rate = if attacks == 0 { 1.0 } else { ratio(caught, attacks) };
        let applicable: Vec<&ClassMetrics> = per_class.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let mean = |f: fn(&ClassMetrics) -> f64| {
            if applicable.is_empty() {
                0.0
            } else {
                applicable.iter().map(|m| f(m)).sum::<f64>() / applicable.len() as f64
            }
        };
        Self {
            total,
            accuracy: ratio(trace, total),
            detection_rate,
            false_alarm_rate: ratio(alarms, benign),
            false_negative_rate: 1.0 - detection_rate,
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            confusion,
            per_class,
        }
    }

    pub fn class(&self, class: ThreatClass) -> Option<&ClassMetrics> {
        self.per_class[class.index()].metrics.as_ref()
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples            {}", self.total);
        let _ = writeln!(s, "accuracy           {:.4}", self.accuracy);
        let _ = writeln!(s, "detection rate     {:.4}", self.detection_rate);
        let _ = writeln!(s, "false alarm rate   {:.4}", self.false_alarm_rate);
        let _ = writeln!(s, "false negative rate {:.4}", self.false_negative_rate);
        let _ = writeln!(s, "macro F1           {:.4}", self.macro_f1);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for row in &self.per_class {
            match &row.metrics {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                        row.class.name(),
                        m.precision,
                        m.recall,
                        m.f1,
                        m.support
                    );
                }
                None => {
                    let _ = writeln!(s, "{:<10} {:>9} {:>9} {:>9} {:>8}", row.class.name(), "n/a", "n/a", "n/a", 0);
                }
            }
        }
        let _ = writeln!(s);
        let _ = write!(s, "confusion (rows true, columns predicted)\n{:<10}", "");
        for c in ThreatClass::ALL {
            let _ = write!(s, " {:>9}", c.name());
        }
        let _ = writeln!(s);
        for t in ThreatClass::ALL {
            let _ = write!(s, "{:<10}", t.name());
            for n in &self.confusion[t.index()] {
                let _ = write!(s, " {n:>9}");
            }
            let _ = writeln!(s);
        }
        s
    }

    /// `metric,class,value` rows; global metrics use the class `all`.
    pub fn plot_csv(&self) -> String {
        let mut s = String::from("metric,class,value\n");
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("detection_rate", self.detection_rate),
            ("false_alarm_rate", self.false_alarm_rate),
            ("false_negative_rate", self.false_negative_rate),
            ("macro_f1", self.macro_f1),
        ] {
            let _ = writeln!(s, "{name},all,{v}");
        }
        for row in &self.per_class {
            if let Some(m) = &row.metrics {
                for (name, v) in [("precision", m.precision), ("recall", m.recall), ("f1", m.f1)] {
                    let _ = writeln!(s, "{name},{},{v}", row.class.name());
                }
            }
        }
        s
    }
}

/// Scores `data` with `model` after checking the schema fingerprints agree.
pub fn evaluate(model: &TabNetModel, data: &FusedDataset) -> Result<MetricsReport> {
    model.check_schema(&data.schema)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred = model.predict(&data.features)?;
    MetricsReport::from_predictions(&data.labels, &pred.labels)
}
