use std::f64::consts::FRAC_1_SQRT_2;

use super::params::StepParams;
use crate::diff::{
    batch_norm, batch_norm_backward, glu, glu_backward, linear_backward, linear_forward,
    sparsemax_rows, sparsemax_rows_backward, BnCache, BnState, Mode, ParamBlock, Tensor2,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    input: Tensor2,
    normalized: Tensor2,
    bn: BnCache,
    residual: bool,
}

/// One FC → BN → GLU block, optionally with a scaled residual connection.
pub(crate) fn glu_block(
    x: &Tensor2,
    fc: &ParamBlock,
    bn: &mut BnState,
    mode: Mode,
    residual: bool,
) -> Result<(Tensor2, BlockCache)> {
    let z = linear_forward(x, fc)?;
    let (normalized, bn_cache) = batch_norm(&z, bn, mode, false)?;
    let mut out = glu(&normalized);
    if residual {
        out.add_assign(x)?;
        out.scale(FRAC_1_SQRT_2);
    }
    Ok((
        out,
        BlockCache {
            input: x.clone(),
            normalized,
            bn: bn_cache,
            residual,
        },
    ))
}

pub(crate) fn glu_block_backward(cache: &BlockCache, fc: &mut ParamBlock, grad: &Tensor2) -> Result<Tensor2> {
    let mut grad_g = grad.clone();
    if cache.residual {
        grad_g.scale(FRAC_1_SQRT_2);
    }
    let grad_n = glu_backward(&cache.normalized, &grad_g)?;
    let grad_z = batch_norm_backward(&cache.bn, &grad_n)?;
    let mut grad_x = linear_backward(&cache.input, fc, &grad_z)?;
    if cache.residual {
        grad_x.add_assign(&grad_g)?;
    }
    Ok(grad_x)
}

/// Runs a stack of GLU blocks; the first block has no residual connection.
pub(crate) fn glu_stack<'a>(
    x: &Tensor2,
    layers: impl Iterator<Item = (&'a ParamBlock, &'a mut BnState)>,
    mode: Mode,
) -> Result<(Tensor2, Vec<BlockCache>)> {
    let mut h = x.clone();
    let mut caches = Vec::new();
    for (k, (fc, bn)) in layers.enumerate() {
        let (out, cache) = glu_block(&h, fc, bn, mode, k > 0)?;
        caches.push(cache);
        h = out;
    }
    Ok((h, caches))
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    blocks: Vec<BlockCache>,
}

/// Shared then step-specific GLU blocks; returns `(d, a)` split at `n_d`.
pub fn feature_transform(
    masked: &Tensor2,
    shared: &[ParamBlock],
    step: &mut StepParams,
    mode: Mode,
    n_d: usize,
) -> Result<(Tensor2, Tensor2, FeatureCache)> {
    let layers = shared
        .iter()
        .zip(step.shared_bn.iter_mut())
        .chain(step.blocks.iter().zip(step.block_bn.iter_mut()));
    let (h, blocks) = glu_stack(masked, layers, mode)?;
    if n_d > h.cols() {
        return Err(Error::dim("feature_transform", format!("at least {n_d} columns"), h.cols()));
    }
    Ok((h.slice_cols(0, n_d), h.slice_cols(n_d, h.cols()), FeatureCache { blocks }))
}

pub fn feature_transform_backward(
    cache: &FeatureCache,
    shared: &mut [ParamBlock],
    step: &mut StepParams,
    grad_d: &Tensor2,
    grad_a: &Tensor2,
) -> Result<Tensor2> {
    let mut grad = Tensor2::hconcat(grad_d, grad_a)?;
    let n_shared = shared.len();
    for (k, block) in cache.blocks.iter().enumerate().rev() {
        let fc = if k < n_shared {
            &mut shared[k]
        } else {
            &mut step.blocks[k - n_shared]
        };
        grad = glu_block_backward(block, fc, &grad)?;
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor2,
    bn: BnCache,
    pub(crate) logits: Tensor2,
    prior: Tensor2,
    pub(crate) mask: Tensor2,
}

/// `M = sparsemax(P ⊙ BN(FC(a_prev)))`, row-wise.
pub fn attentive_transform(
    a_prev: &Tensor2,
    prior: &Tensor2,
    fc: &ParamBlock,
    bn: &mut BnState,
    mode: Mode,
) -> Result<(Tensor2, AttentionCache)> {
    let z = linear_forward(a_prev, fc)?;
    let (logits, bn_cache) = batch_norm(&z, bn, mode, false)?;
    let scaled = prior.hadamard(&logits)?;
    let mask = sparsemax_rows(&scaled);
    Ok((
        mask.clone(),
        AttentionCache {
            input: a_prev.clone(),
            bn: bn_cache,
            logits,
            prior: prior.clone(),
            mask,
        },
    ))
}

/// Returns `(grad_a_prev, grad_prior)`.
pub fn attentive_transform_backward(
    cache: &AttentionCache,
    fc: &mut ParamBlock,
    grad_mask: &Tensor2,
) -> Result<(Tensor2, Tensor2)> {
    let grad_scaled = sparsemax_rows_backward(&cache.mask, grad_mask);
    let grad_prior = grad_scaled.hadamard(&cache.logits)?;
    let grad_logits = grad_scaled.hadamard(&cache.prior)?;
    let grad_z = batch_norm_backward(&cache.bn, &grad_logits)?;
    let grad_a = linear_backward(&cache.input, fc, &grad_z)?;
    Ok((grad_a, grad_prior))
}

/// `P ⊙ (γ − M)`.
pub fn update_prior(prior: &Tensor2, mask: &Tensor2, gamma: f64) -> Result<Tensor2> {
    prior.zip_map(mask, |p, m| p * (gamma - m))
}
