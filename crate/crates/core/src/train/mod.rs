//! Supervised training, prediction and the evaluation metric suite.

mod metrics;
mod reference;
mod supervised;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoder::TabnetParams;

pub use metrics::{evaluate, ClassMetrics, ClassRow, MetricsReport};
pub use reference::{compare_report, reference_table, reference_tables, DeltaRow, DeltaTable, ReferenceTable};
pub use supervised::{train, TrainConfig, TrainHistory, TrainOutcome};

/// Which objective produced a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrained,
    Supervised,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrained => "pretrained",
            Phase::Supervised => "supervised",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "pretrained" => Ok(Phase::Pretrained),
            "supervised" => Ok(Phase::Supervised),
            other => Err(crate::Error::Format(format!("unknown phase `{other}`"))),
        }
    }
}

/// Diagnostics of a run aborted on a non-finite loss.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub phase: Phase,
    pub epoch: usize,
    /// Optimizer steps taken before the failing batch.
    pub step: u64,
    /// Index of the failing batch within its epoch.
    pub batch: usize,
    pub learning_rate: f64,
    pub loss: f64,
    /// Parameters at the start of the failing epoch.
    pub checkpoint: Option<TabnetParams>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} loss became {} at epoch {}, step {}, batch {} (learning rate {:e})",
            self.phase, self.loss, self.epoch, self.step, self.batch, self.learning_rate
        )
    }
}
