use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and regularization settings of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub n_steps: usize,
    /// Width of the decision output `d[i]`.
    pub n_d: usize,
    /// Width of the attention output `a[i]`.
    pub n_a: usize,
    /// Prior relaxation; 1 forbids reusing a fully selected feature.
    pub gamma: f64,
    pub lambda_sparse: f64,
    pub shared_layers: usize,
    pub step_layers: usize,
    /// Stabilizer inside the sparsity regularizer's logarithm.
    pub epsilon: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
    /// Ghost batch size for the input normalization.
    pub virtual_batch: usize,
    pub n_classes: usize,
    pub head_bias: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_steps: 3,
            n_d: 16,
            n_a: 16,
            gamma: 1.3,
            lambda_sparse: 1e-3,
            shared_layers: 2,
            step_layers: 2,
            epsilon: 1e-15,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
            virtual_batch: 128,
            n_classes: crate::fusion::ThreatClass::COUNT,
            head_bias: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_steps == 0 {
            return fail("n_steps must be at least 1".into());
        }
        if self.n_d == 0 || self.n_a == 0 {
            return fail("n_d and n_a must be at least 1".into());
        }
        if self.shared_layers + self.step_layers == 0 {
            return fail("the feature transformer needs at least one layer".into());
        }
        if !(self.gamma >= 1.0) {
            return fail(format!("gamma must be >= 1, got {}", self.gamma));
        }
        if !(self.lambda_sparse >= 0.0) {
            return fail(format!("lambda_sparse must be >= 0, got {}", self.lambda_sparse));
        }
        if !(self.epsilon > 0.0) || !(self.bn_epsilon > 0.0) {
            return fail("epsilon values must be positive".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return fail(format!("bn_momentum must be in (0, 1], got {}", self.bn_momentum));
        }
        if self.virtual_batch == 0 || self.n_classes < 2 {
            return fail("virtual_batch must be >= 1 and n_classes >= 2".into());
        }
        Ok(())
    }

    /// Width of every feature-transformer block output.
    pub fn hidden(&self) -> usize {
        self.n_d + self.n_a
    }
}
