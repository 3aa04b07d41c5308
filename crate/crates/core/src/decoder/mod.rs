//! Masked-feature reconstruction decoder used for self-supervised pretraining.

mod pretrain;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{linear_backward, linear_forward, BnState, Mode, ParamBlock, Tensor2};
use crate::encoder::{glu_block_backward, glu_stack, new_bn, BlockCache, EncoderConfig, Parameters};
use crate::error::{Error, Result};

pub use pretrain::{column_reconstruction_error, pretrain, pretrain_features, PretrainConfig, PretrainOutcome};

/// Binary corruption mask: 1 marks a cell hidden from the encoder and predicted
/// by the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSupMask {
    pub s: Tensor2,
    pub p_s: f64,
}

impl SelfSupMask {
    /// `1 − S`.
    pub fn complement(&self) -> Tensor2 {
        self.s.map(|v| 1.0 - v)
    }

    /// Encoder input `(1 − S) ⊙ f`.
    pub fn hide(&self, f: &Tensor2) -> Result<Tensor2> {
        f.zip_map(&self.s, |x, s| x * (1.0 - s))
    }
}

pub fn sample_mask(rows: usize, cols: usize, p_s: f64, seed: u64) -> Result<SelfSupMask> {
    if !(p_s > 0.0 && p_s < 1.0) {
        return Err(Error::Config(format!("p_s must be in (0, 1), got {p_s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| if rng.gen_bool(p_s) { 1.0 } else { 0.0 })
        .collect();
    Ok(SelfSupMask {
        s: Tensor2::from_vec(rows, cols, data)?,
        p_s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStep {
    pub blocks: Vec<ParamBlock>,
    pub block_bn: Vec<BnState>,
    /// `N_d → D`, no bias.
    pub head: ParamBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub output_dim: usize,
    pub steps: Vec<DecoderStep>,
}

impl DecoderParams {
    pub fn new(output_dim: usize, cfg: &EncoderConfig, layers: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = (0..cfg.n_steps)
            .map(|_| {
                Ok(DecoderStep {
                    blocks: (0..layers)
                        .map(|_| ParamBlock::glorot(cfg.n_d, cfg.n_d, false, &mut rng))
                        .collect(),
                    block_bn: (0..layers)
                        .map(|_| new_bn(cfg.n_d, cfg, usize::MAX))
                        .collect::<Result<_>>()?,
                    head: ParamBlock::glorot(cfg.n_d, output_dim, false, &mut rng),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { output_dim, steps })
    }

    pub fn for_each_head(&mut self, mut f: impl FnMut(&mut ParamBlock)) {
        self.steps.iter_mut().for_each(|s| f(&mut s.head));
    }

    pub fn for_each_bn_mut(&mut self, mut f: impl FnMut(&mut BnState)) {
        self.steps.iter_mut().flat_map(|s| s.block_bn.iter_mut()).for_each(&mut f);
    }
}

impl Parameters for DecoderParams {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        for step in &self.steps {
            step.blocks.iter().for_each(&mut *f);
            f(&step.head);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        for step in &mut self.steps {
            step.blocks.iter_mut().for_each(&mut *f);
            f(&mut step.head);
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    blocks: Vec<Vec<BlockCache>>,
    hidden: Vec<Tensor2>,
    s: Tensor2,
}

/// Reconstructs `S ⊙ Σ_i head_i(FT_i(h_i))` from the per-step encoder outputs.
pub fn decoder_forward(
    step_outputs: &[Tensor2],
    dp: &mut DecoderParams,
    mask: &SelfSupMask,
    mode: Mode,
) -> Result<(Tensor2, DecoderCache)> {
    if step_outputs.len() != dp.steps.len() {
        return Err(Error::dim("decoder_forward steps", dp.steps.len(), step_outputs.len()));
    }
    let rows = mask.s.rows();
    mask.s.expect_shape("decoder_forward mask", (rows, dp.output_dim))?;
    let mut total = Tensor2::zeros(rows, dp.output_dim);
    let mut blocks = Vec::with_capacity(dp.steps.len());
    let mut hidden = Vec::with_capacity(dp.steps.len());
    for (h, step) in step_outputs.iter().zip(&mut dp.steps) {
        let layers = step.blocks.iter().zip(step.block_bn.iter_mut());
        let (z, caches) = glu_stack(h, layers, mode)?;
        total.add_assign(&linear_forward(&z, &step.head)?)?;
        blocks.push(caches);
        hidden.push(z);
    }
    let out = total.hadamard(&mask.s)?;
    Ok((
        out,
        DecoderCache {
            blocks,
            hidden,
            s: mask.s.clone(),
        },
    ))
}

/// Returns the gradient with respect to each step output.
pub fn decoder_backward(dp: &mut DecoderParams, cache: &DecoderCache, grad_out: &Tensor2) -> Result<Vec<Tensor2>> {
    let grad_total = grad_out.hadamard(&cache.s)?;
    let mut grads = Vec::with_capacity(dp.steps.len());
    for ((step, caches), z) in dp.steps.iter_mut().zip(&cache.blocks).zip(&cache.hidden) {
        let mut g = linear_backward(z, &mut step.head, &grad_total)?;
        for (k, block) in caches.iter().enumerate().rev() {
            g = glu_block_backward(block, &mut step.blocks[k], &g)?;
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Population standard deviation of every column.
pub fn column_std(f: &Tensor2) -> Vec<f64> {
    let n = f.rows() as f64;
    (0..f.cols())
        .map(|j| {
            let mean = (0..f.rows()).map(|r| f.get(r, j)).sum::<f64>() / n;
            let var = (0..f.rows()).map(|r| (f.get(r, j) - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect()
}

/// `Σ_b Σ_j ((f̂ − f) · S / std_j)²` with `std_j` taken from `f` itself.
pub fn reconstruction_loss(f_hat: &Tensor2, f: &Tensor2, mask: &SelfSupMask) -> Result<f64> {
    let std = column_std(f);
    if let Some(column) = std.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroVariance {
            column: column.to_string(),
        });
    }
    Ok(masked_loss(f_hat, f, &mask.s, &std)?.0)
}

/// Loss and its gradient with respect to `f̂` using precomputed column
/// deviations; columns with zero deviation contribute nothing.
pub(crate) fn masked_loss(f_hat: &Tensor2, f: &Tensor2, s: &Tensor2, std: &[f64]) -> Result<(f64, Tensor2)> {
    f_hat.expect_shape("reconstruction_loss", f.shape())?;
    s.expect_shape("reconstruction_loss mask", f.shape())?;
    if std.len() != f.cols() {
        return Err(Error::dim("reconstruction_loss std", f.cols(), std.len()));
    }
    let inv: Vec<f64> = std.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 0.0 }).collect();
    let mut loss = 0.0;
    let mut grad = Tensor2::zeros(f.rows(), f.cols());
    for r in 0..f.rows() {
        let (fh, fr, sr) = (f_hat.row(r), f.row(r), s.row(r));
        let g = grad.row_mut(r);
        for j in 0..f.cols() {
            let e = (fh[j] - fr[j]) * sr[j] * inv[j];
            loss += e * e;
            g[j] = 2.0 * e * sr[j] * inv[j];
        }
    }
    Ok((loss, grad))
}
