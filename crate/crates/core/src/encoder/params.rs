use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EncoderConfig;
use crate::diff::{BnState, ParamBlock};
use crate::error::Result;

/// Step-specific layers plus the normalization state this step uses.
///
/// The shared fully connected layers live in [`TabnetParams::shared`]; each
/// step keeps its own normalization state for them in `shared_bn`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub shared_bn: Vec<BnState>,
    pub blocks: Vec<ParamBlock>,
    pub block_bn: Vec<BnState>,
    /// Attentive transformer `N_a → D`; absent on the initial splitter step.
    pub attention: Option<ParamBlock>,
    pub attention_bn: Option<BnState>,
}

/// All learnable encoder parameters and normalization state.
///
/// `steps[0]` is the initial splitter producing `a[0]`; `steps[1..]` are the
/// decision steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TabnetParams {
    pub input_dim: usize,
    pub input_bn: BnState,
    pub shared: Vec<ParamBlock>,
    pub steps: Vec<StepParams>,
    pub head: ParamBlock,
}

pub(crate) fn new_bn(width: usize, cfg: &EncoderConfig, virtual_batch: usize) -> Result<BnState> {
    BnState::new(width, cfg.bn_momentum, cfg.bn_epsilon, virtual_batch)
}

impl TabnetParams {
    pub fn new(input_dim: usize, cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = cfg.hidden();
        // Non-input normalizations use the full batch.
        let bn = |w: usize| new_bn(w, cfg, usize::MAX);
        let block_in = |k: usize| if k == 0 { input_dim } else { hidden };

        let shared = (0..cfg.shared_layers)
            .map(|k| ParamBlock::glorot(block_in(k), hidden, false, &mut rng))
            .collect();
        let mut steps = Vec::with_capacity(cfg.n_steps + 1);
        for s in 0..=cfg.n_steps {
            let blocks = (0..cfg.step_layers)
                .map(|k| ParamBlock::glorot(block_in(cfg.shared_layers + k), hidden, false, &mut rng))
                .collect();
            let (attention, attention_bn) = if s == 0 {
                (None, None)
            } else {
                (
                    Some(ParamBlock::glorot(cfg.n_a, input_dim, false, &mut rng)),
                    Some(bn(input_dim)?),
                )
            };
            steps.push(StepParams {
                shared_bn: (0..cfg.shared_layers).map(|_| bn(hidden)).collect::<Result<_>>()?,
                blocks,
                block_bn: (0..cfg.step_layers).map(|_| bn(hidden)).collect::<Result<_>>()?,
                attention,
                attention_bn,
            });
        }
        Ok(Self {
            input_dim,
            input_bn: new_bn(input_dim, cfg, cfg.virtual_batch)?,
            shared,
            steps,
            head: ParamBlock::glorot(cfg.n_d, cfg.n_classes, cfg.head_bias, &mut rng),
        })
    }

    /// Visits every learnable block in a fixed order.
    pub fn for_each_block(&self, mut f: impl FnMut(&ParamBlock)) {
        self.shared.iter().for_each(&mut f);
        for step in &self.steps {
            step.blocks.iter().for_each(&mut f);
            if let Some(a) = &step.attention {
                f(a);
            }
        }
        f(&self.head);
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(&mut ParamBlock)) {
        self.shared.iter_mut().for_each(&mut f);
        for step in &mut self.steps {
            step.blocks.iter_mut().for_each(&mut f);
            if let Some(a) = &mut step.attention {
                f(a);
            }
        }
        f(&mut self.head);
    }

    /// Visits every normalization state in a fixed order.
    pub fn for_each_bn(&self, mut f: impl FnMut(&BnState)) {
        f(&self.input_bn);
        for step in &self.steps {
            step.shared_bn.iter().for_each(&mut f);
            step.block_bn.iter().for_each(&mut f);
            if let Some(bn) = &step.attention_bn {
                f(bn);
            }
        }
    }

    pub fn for_each_bn_mut(&mut self, mut f: impl FnMut(&mut BnState)) {
        f(&mut self.input_bn);
        for step in &mut self.steps {
            step.shared_bn.iter_mut().for_each(&mut f);
            step.block_bn.iter_mut().for_each(&mut f);
            if let Some(bn) = &mut step.attention_bn {
                f(bn);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.for_each_block_mut(ParamBlock::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_block(|b| n += b.param_count());
        n
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Flattening of learnable values and gradients, in visitation order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock));

    fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |b| {
            out.extend_from_slice(b.weights.data());
            if b.has_bias {
                out.extend_from_slice(&b.bias);
            }
        });
        out
    }

    fn set_values(&mut self, values: &[f64]) {
        let mut pos = 0;
        self.visit_mut(&mut |b| {
            let n = b.weights.data().len();
            b.weights.data_mut().copy_from_slice(&values[pos..pos + n]);
            pos += n;
            if b.has_bias {
                let m = b.bias.len();
                b.bias.copy_from_slice(&values[pos..pos + m]);
                pos += m;
            }
        });
        assert_eq!(pos, values.len(), "parameter vector length");
    }

    fn grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |b| {
            out.extend_from_slice(b.grad_weights().data());
            if b.has_bias {
                out.extend_from_slice(&b.grad_bias);
            }
        });
        out
    }
}

impl Parameters for TabnetParams {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.for_each_block(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.for_each_block_mut(f);
    }
}
