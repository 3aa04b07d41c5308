//! Feature importance from the encoder's selection masks.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::diff::{Mode, Tensor2};
use crate::encoder::encoder_forward;
use crate::error::{Error, Result};
use crate::fusion::ThreatClass;
use crate::model::{argmax_classes, TabNetModel};
use crate::train::Phase;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    /// `η_b[i]`, `B × N_steps`.
    pub per_step_eta: Tensor2,
    /// `B × D`, rows sum to 1 except degenerate rows, which are zero.
    pub m_agg: Tensor2,
    /// Mean of the `m_agg` rows.
    pub global_importance: Vec<f64>,
    /// Per sample, the `k` largest `(column, weight)` pairs.
    pub top_features: Vec<Vec<(usize, f64)>>,
    /// Rows whose decision outputs were all non-positive.
    pub degenerate: Vec<bool>,
    pub predicted: Vec<ThreatClass>,
}

/// `η_b = Σ_c ReLU(d_bc)` for one decision step.
pub fn step_importance(d: &Tensor2) -> Vec<f64> {
    (0..d.rows()).map(|r| d.row(r).iter().map(|&v| v.max(0.0)).sum()).collect()
}

/// Aggregates step masks weighted by `etas` (`B × N_steps`). Returns the
/// aggregate and a per-row flag for rows with a zero denominator.
pub fn aggregate_mask(masks: &[Tensor2], etas: &Tensor2) -> Result<(Tensor2, Vec<bool>)> {
    let Some(first) = masks.first() else {
        return Err(Error::dim("aggregate_mask", "at least one step", 0));
    };
    let (b, d) = first.shape();
    etas.expect_shape("aggregate_mask", (b, masks.len()))?;
    for m in masks {
        m.expect_shape("aggregate_mask", (b, d))?;
    }
    let mut out = Tensor2::zeros(b, d);
    let mut degenerate = vec![false; b];
    for r in 0..b {
        let row = out.row_mut(r);
        for (i, m) in masks.iter().enumerate() {
            let eta = etas.get(r, i);
            for (o, &v) in row.iter_mut().zip(m.row(r)) {
                *o += eta * v;
            }
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            row.fill(0.0);
            degenerate[r] = true;
        }
    }
    Ok((out, degenerate))
}

/// Indices of the `k` largest entries, ties to the lower index.
fn top_k(row: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|j| (j, row[j])).collect()
}

struct Chunk {
    eta: Vec<f64>,
    m_agg: Vec<f64>,
    degenerate: Vec<bool>,
    predicted: Vec<ThreatClass>,
}

/// Runs the encoder in inference mode and reports mask-based importances.
pub fn explain(model: &TabNetModel, batch: &Tensor2, k: usize) -> Result<ImportanceReport> {
    if model.phase != Phase::Supervised {
        return Err(Error::Usage(
            "explain needs a trained classifier; this model only holds pretrained weights".into(),
        ));
    }
    let d = model.params.input_dim;
    if batch.cols() != d {
        return Err(Error::Width {
            expected: d,
            found: batch.cols(),
        });
    }
    if k > d {
        return Err(Error::Usage(format!("k = {k} exceeds the {d} feature columns")));
    }
    let n_steps = model.config.n_steps;
    let starts: Vec<usize> = (0..batch.rows()).step_by(CHUNK).collect();
    let chunks = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(batch.rows());
            let rows: Vec<usize> = (start..end).collect();
            let mut params = model.params.clone();
            let out = encoder_forward(&batch.select_rows(&rows), &mut params, &model.config, Mode::Infer)?;
            let per_step: Vec<Vec<f64>> = out.steps.iter().map(|s| step_importance(&s.d)).collect();
            let mut eta = Vec::with_capacity(rows.len() * n_steps);
            for r in 0..rows.len() {
                eta.extend(per_step.iter().map(|e| e[r]));
            }
            let eta = Tensor2::from_vec(rows.len(), n_steps, eta)?;
            let (m_agg, degenerate) = aggregate_mask(&out.masks(), &eta)?;
            Ok(Chunk {
                eta: eta.into_data(),
                m_agg: m_agg.into_data(),
                degenerate,
                predicted: argmax_classes(&out.logits),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (mut eta, mut m_agg, mut degenerate, mut predicted) = (vec![], vec![], vec![], vec![]);
    for c in chunks {
        eta.extend(c.eta);
        m_agg.extend(c.m_agg);
        degenerate.extend(c.degenerate);
        predicted.extend(c.predicted);
    }
    let b = batch.rows();
    let m_agg = Tensor2::from_vec(b, d, m_agg)?;
    let mut global_importance = vec![0.0; d];
    if b > 0 {
        for r in 0..b {
            for (g, &v) in global_importance.iter_mut().zip(m_agg.row(r)) {
                *g += v;
            }
        }
        global_importance.iter_mut().for_each(|g| *g /= b as f64);
    }
    let top_features = (0..b).map(|r| top_k(m_agg.row(r), k)).collect();
    Ok(ImportanceReport {
        per_step_eta: Tensor2::from_vec(b, n_steps, eta)?,
        m_agg,
        global_importance,
        top_features,
        degenerate,
        predicted,
    })
}

impl ImportanceReport {
    /// One line per sample: index, true label when known, predicted class
    /// and the top features as `name=weight`.
    pub fn to_text(&self, names: &[String], labels: Option<&[ThreatClass]>) -> String {
        let mut s = String::new();
        for (r, top) in self.top_features.iter().enumerate() {
            let _ = write!(s, "{r}");
            if let Some(labels) = labels {
                let _ = write!(s, "\tlabel={}", labels[r].name());
            }
            let _ = write!(s, "\tpredicted={}", self.predicted[r].name());
            if self.degenerate[r] {
                let _ = write!(s, "\tdegenerate");
            }
            for &(j, w) in top {
                let _ = write!(s, "\t{}={w:.4}", names[j]);
            }
            let _ = writeln!(s);
        }
        s
    }

    /// `m_agg` as CSV with a header of column names.
    pub fn matrix_csv(&self, names: &[String]) -> String {
        let mut s = names.join(",");
        s.push('\n');
        for r in 0..self.m_agg.rows() {
            let row: Vec<String> = self.m_agg.row(r).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn global_csv(&self, names: &[String]) -> String {
        let mut s = String::from("feature,importance\n");
        for (n, v) in names.iter().zip(&self.global_importance) {
            let _ = writeln!(s, "{n},{v}");
        }
        s
    }
}
