use super::blocks::{
    attentive_transform, attentive_transform_backward, feature_transform, feature_transform_backward,
    update_prior, AttentionCache, FeatureCache,
};
use super::sparsity::{sparsity_grad, sparsity_loss};
use super::{EncoderConfig, TabnetParams};
use crate::diff::{
    batch_norm, batch_norm_backward, linear_backward, linear_forward, relu, relu_backward, BnCache,
    Mode, Tensor2,
};
use crate::error::{Error, Result};

/// Per-step quantities of one forward pass.
#[derive(Debug, Clone)]
pub struct StepState {
    /// Prior after this step's update, `P[i]`.
    pub prior: Tensor2,
    pub mask: Tensor2,
    /// Normalized attention logits before prior scaling.
    pub logits: Tensor2,
    pub a: Tensor2,
    pub d: Tensor2,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// Class logits, `B × n_classes`.
    pub logits: Tensor2,
    /// `Σ ReLU(d[i])`.
    pub d_out: Tensor2,
    pub steps: Vec<StepState>,
    pub initial_prior: Tensor2,
    pub l_sparse: f64,
}

impl EncoderOutput {
    pub fn masks(&self) -> Vec<Tensor2> {
        self.steps.iter().map(|s| s.mask.clone()).collect()
    }

    /// `ReLU(d[i])` for every decision step.
    pub fn step_outputs(&self) -> Vec<Tensor2> {
        self.steps.iter().map(|s| relu(&s.d)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    input_bn: BnCache,
    x: Tensor2,
    splitter: FeatureCache,
    attention: Vec<AttentionCache>,
    features: Vec<FeatureCache>,
    /// `P[0..N-1]`: the prior each step consumed.
    priors: Vec<Tensor2>,
}

/// Gradients arriving at the encoder outputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct EncoderGrad<'a> {
    pub logits: Option<&'a Tensor2>,
    /// Gradient with respect to each `ReLU(d[i])`.
    pub step_outputs: Option<&'a [Tensor2]>,
    /// Weight of the sparsity regularizer in the total loss.
    pub sparse_weight: f64,
}

/// Supervised forward pass with an all-ones initial prior.
pub fn encoder_forward(
    f: &Tensor2,
    params: &mut TabnetParams,
    cfg: &EncoderConfig,
    mode: Mode,
) -> Result<EncoderOutput> {
    encoder_forward_cached(f, None, params, cfg, mode).map(|(out, _)| out)
}

pub fn encoder_forward_cached(
    f: &Tensor2,
    prior0: Option<&Tensor2>,
    params: &mut TabnetParams,
    cfg: &EncoderConfig,
    mode: Mode,
) -> Result<(EncoderOutput, EncoderCache)> {
    if f.cols() != params.input_dim {
        return Err(Error::dim("encoder_forward", params.input_dim, f.cols()));
    }
    if params.n_steps() != cfg.n_steps {
        return Err(Error::dim("encoder_forward steps", params.n_steps(), cfg.n_steps));
    }
    let b = f.rows();
    let initial_prior = match prior0 {
        Some(p) => {
            p.expect_shape("encoder_forward prior", f.shape())?;
            p.clone()
        }
        None => Tensor2::filled(b, f.cols(), 1.0),
    };

    let TabnetParams {
        input_bn,
        shared,
        steps,
        head,
        ..
    } = params;
    let (x, input_cache) = batch_norm(f, input_bn, mode, true)?;
    let (_, mut a_prev, splitter) = feature_transform(&x, shared, &mut steps[0], mode, cfg.n_d)?;

    let mut prior = initial_prior.clone();
    let mut d_out = Tensor2::zeros(b, cfg.n_d);
    let mut states = Vec::with_capacity(cfg.n_steps);
    let mut attention = Vec::with_capacity(cfg.n_steps);
    let mut features = Vec::with_capacity(cfg.n_steps);
    let mut priors = Vec::with_capacity(cfg.n_steps);
    for (i, step) in steps.iter_mut().enumerate().skip(1) {
        let fc = step.attention.as_ref().expect("decision step has attention");
        let bn = step.attention_bn.as_mut().expect("decision step has attention norm");
        let (mask, att_cache) = attentive_transform(&a_prev, &prior, fc, bn, mode)?;
        let masked = mask.hadamard(&x)?;
        let (d, a, ft_cache) = feature_transform(&masked, shared, step, mode, cfg.n_d)?;
        if !mask.is_finite() || !d.is_finite() || !a.is_finite() {
            return Err(Error::NumericOverflow {
                stage: format!("encoder step {i}"),
            });
        }
        d_out.add_assign(&relu(&d))?;
        let next_prior = update_prior(&prior, &mask, cfg.gamma)?;
        priors.push(std::mem::replace(&mut prior, next_prior.clone()));
        states.push(StepState {
            prior: next_prior,
            mask,
            logits: att_cache.logits.clone(),
            a: a.clone(),
            d,
        });
        attention.push(att_cache);
        features.push(ft_cache);
        a_prev = a;
    }
    let logits = linear_forward(&d_out, head)?;
    if !logits.is_finite() {
        return Err(Error::NumericOverflow {
            stage: "classification head".into(),
        });
    }
    let masks: Vec<Tensor2> = states.iter().map(|s| s.mask.clone()).collect();
    let l_sparse = sparsity_loss(&masks, cfg.epsilon);
    Ok((
        EncoderOutput {
            logits,
            d_out,
            steps: states,
            initial_prior,
            l_sparse,
        },
        EncoderCache {
            input_bn: input_cache,
            x,
            splitter,
            attention,
            features,
            priors,
        },
    ))
}

/// Accumulates parameter gradients and returns the gradient with respect to
/// the encoder input.
pub fn encoder_backward(
    params: &mut TabnetParams,
    cfg: &EncoderConfig,
    out: &EncoderOutput,
    cache: &EncoderCache,
    grad: EncoderGrad<'_>,
) -> Result<Tensor2> {
    let b = out.d_out.rows();
    let d_in = params.input_dim;
    let TabnetParams {
        shared, steps, head, ..
    } = params;
    let grad_dout = match grad.logits {
        Some(g) => linear_backward(&out.d_out, head, g)?,
        None => Tensor2::zeros(b, cfg.n_d),
    };
    let mut grad_a = Tensor2::zeros(b, cfg.n_a);
    let mut grad_prior = Tensor2::zeros(b, d_in);
    let mut grad_x = Tensor2::zeros(b, d_in);

    for i in (0..cfg.n_steps).rev() {
        let state = &out.steps[i];
        let step = &mut steps[i + 1];
        let mut grad_relu = grad_dout.clone();
        if let Some(extra) = grad.step_outputs {
            grad_relu.add_assign(&extra[i])?;
        }
        let grad_d = relu_backward(&state.d, &grad_relu)?;
        let grad_masked = feature_transform_backward(&cache.features[i], shared, step, &grad_d, &grad_a)?;
        grad_x.add_assign(&grad_masked.hadamard(&state.mask)?)?;

        let mut grad_mask = grad_masked.hadamard(&cache.x)?;
        if grad.sparse_weight != 0.0 {
            grad_mask.add_assign(&sparsity_grad(&state.mask, cfg.n_steps, cfg.epsilon, grad.sparse_weight))?;
        }
        let prior_prev = &cache.priors[i];
        let through_prior = grad_prior.hadamard(prior_prev)?;
        grad_mask.add_assign(&through_prior.map(|v| -v))?;
        let mut grad_prior_prev = grad_prior.zip_map(&state.mask, |g, m| g * (cfg.gamma - m))?;

        let fc = step.attention.as_mut().expect("decision step has attention");
        let (grad_a_prev, grad_p) = attentive_transform_backward(&cache.attention[i], fc, &grad_mask)?;
        grad_prior_prev.add_assign(&grad_p)?;
        grad_prior = grad_prior_prev;
        grad_a = grad_a_prev;
    }
    let grad_d0 = Tensor2::zeros(b, cfg.n_d);
    let grad_x0 = feature_transform_backward(&cache.splitter, shared, &mut steps[0], &grad_d0, &grad_a)?;
    grad_x.add_assign(&grad_x0)?;
    batch_norm_backward(&cache.input_bn, &grad_x)
}
