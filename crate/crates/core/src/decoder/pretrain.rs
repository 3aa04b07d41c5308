use log::info;
use serde::{Deserialize, Serialize};

use super::{column_std, decoder_backward, decoder_forward, masked_loss, sample_mask, DecoderParams, SelfSupMask};
use crate::diff::{Mode, Tensor2};
use crate::encoder::{encoder_backward, encoder_forward_cached, EncoderConfig, EncoderGrad, Parameters, TabnetParams};
use crate::error::{Error, Result};
use crate::fusion::FusedDataset;
use crate::optim::Adam;
use crate::rng::{batches, derive_seed, rng_for, shuffled, stream};
use crate::train::{Divergence, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Bernoulli rate of hidden cells.
    pub p_s: f64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub holdout_fraction: f64,
    pub decoder_layers: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 1024,
            p_s: 0.2,
            learning_rate: 0.02,
            lr_decay: 0.95,
            holdout_fraction: 0.1,
            decoder_layers: 2,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_s > 0.0 && self.p_s < 1.0) {
            return Err(Error::Config(format!("p_s must be in (0, 1), got {}", self.p_s)));
        }
        if self.batch_size < 2 || !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::Config(
                "pretraining needs batch_size >= 2 and positive learning rate and decay".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Encoder at the epoch with the lowest held-out loss.
    pub encoder: TabnetParams,
    pub decoder: DecoderParams,
    /// Mean per-row reconstruction loss over each epoch's batches.
    pub train_loss: Vec<f64>,
    /// Per-row reconstruction loss on the held-out slice after each epoch.
    pub holdout_loss: Vec<f64>,
    pub best_epoch: usize,
}

pub fn pretrain(data: &FusedDataset, cfg: &EncoderConfig, opts: &PretrainConfig, seed: u64) -> Result<PretrainOutcome> {
    pretrain_features(&data.features, cfg, opts, seed)
}

struct Masked<'a> {
    f: &'a Tensor2,
    mask: &'a SelfSupMask,
    std: &'a [f64],
}

/// Per-row reconstruction loss plus the weighted sparsity term; fills
/// parameter gradients when `with_grad` is set.
fn reconstruct(
    batch: &Masked<'_>,
    enc: &mut TabnetParams,
    dec: &mut DecoderParams,
    cfg: &EncoderConfig,
    mode: Mode,
    with_grad: bool,
) -> Result<f64> {
    let input = batch.mask.hide(batch.f)?;
    let prior = batch.mask.complement();
    let (out, cache) = encoder_forward_cached(&input, Some(&prior), enc, cfg, mode)?;
    let (f_hat, dcache) = decoder_forward(&out.step_outputs(), dec, batch.mask, mode)?;
    let (loss, mut grad) = masked_loss(&f_hat, batch.f, &batch.mask.s, batch.std)?;
    let rows = batch.f.rows() as f64;
    let per_row = loss / rows;
    if with_grad && per_row.is_finite() {
        grad.scale(1.0 / rows);
        enc.zero_grad();
        dec.visit_mut(&mut |b| b.zero_grad());
        let grad_steps = decoder_backward(dec, &dcache, &grad)?;
        let g = EncoderGrad {
            logits: None,
            step_outputs: Some(&grad_steps),
            sparse_weight: cfg.lambda_sparse,
        };
        encoder_backward(enc, cfg, &out, &cache, g)?;
    }
    Ok(per_row + cfg.lambda_sparse * out.l_sparse)
}

/// Masked-reconstruction pretraining of a fresh encoder on raw feature rows.
pub fn pretrain_features(
    features: &Tensor2,
    cfg: &EncoderConfig,
    opts: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    opts.validate()?;
    let n = features.rows();
    if n < 2 {
        return Err(Error::EmptyDataset);
    }
    let d = features.cols();
    let mut rng = rng_for(seed, stream::SHUFFLE, 0);
    let order = shuffled(n, &mut rng);
    let n_hold = (n as f64 * opts.holdout_fraction).round() as usize;
    let (train_idx, hold_idx) = if n_hold >= 2 && n - n_hold >= 2 {
        (order[n_hold..].to_vec(), order[..n_hold].to_vec())
    } else {
        (order.clone(), order.clone())
    };
    let train_x = features.select_rows(&train_idx);
    let hold_x = features.select_rows(&hold_idx);
    let std = column_std(&train_x);
    let hold_mask = sample_mask(hold_x.rows(), d, opts.p_s, derive_seed(seed, stream::HOLDOUT, 0))?;

    let mut enc = TabnetParams::new(d, cfg, derive_seed(seed, stream::ENCODER_INIT, 0))?;
    let mut dec = DecoderParams::new(d, cfg, opts.decoder_layers, derive_seed(seed, stream::DECODER_INIT, 0))?;
    let mut opt_enc = Adam::new(opts.learning_rate);
    let mut opt_dec = Adam::new(opts.learning_rate);
    let mut best: Option<(f64, TabnetParams, DecoderParams, usize)> = None;
    let mut train_curve = Vec::with_capacity(opts.epochs);
    let mut hold_curve = Vec::with_capacity(opts.epochs);
    let mut counter = 0u64;

    let diverged = |epoch, step, batch, lr, loss, checkpoint: &TabnetParams| {
        Error::Diverged(Box::new(Divergence {
            phase: Phase::Pretrained,
            epoch,
            step,
            batch,
            learning_rate: lr,
            loss,
            checkpoint: Some(checkpoint.clone()),
        }))
    };

    for epoch in 0..opts.epochs {
        let local = shuffled(train_x.rows(), &mut rng);
        let epoch_start = enc.clone();
        let mut sum = 0.0;
        let mut count = 0usize;
        for (b, idx) in batches(&local, opts.batch_size).into_iter().enumerate() {
            let f = train_x.select_rows(idx);
            let mask = sample_mask(f.rows(), d, opts.p_s, derive_seed(seed, stream::PRETRAIN_MASK, counter))?;
            counter += 1;
            let batch = Masked { f: &f, mask: &mask, std: &std };
            let loss = match reconstruct(&batch, &mut enc, &mut dec, cfg, Mode::Train, true) {
                Ok(l) => l,
                Err(Error::NumericOverflow { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged(epoch, opt_enc.steps_taken(), b, opt_enc.learning_rate, loss, &epoch_start));
            }
            opt_enc.step(&mut enc);
            opt_dec.step(&mut dec);
            sum += loss * f.rows() as f64;
            count += f.rows();
        }
        train_curve.push(sum / count as f64);

        let hold = Masked {
            f: &hold_x,
            mask: &hold_mask,
            std: &std,
        };
        let hold_loss = match reconstruct(&hold, &mut enc, &mut dec, cfg, Mode::Infer, false) {
            Ok(l) => l,
            Err(Error::NumericOverflow { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        if !hold_loss.is_finite() {
            return Err(diverged(epoch, opt_enc.steps_taken(), 0, opt_enc.learning_rate, hold_loss, &epoch_start));
        }
        hold_curve.push(hold_loss);
        info!(
            "pretrain epoch {epoch}: train {:.6} holdout {hold_loss:.6}",
            train_curve[epoch]
        );
        if best.as_ref().is_none_or(|b| hold_loss < b.0) {
            best = Some((hold_loss, enc.clone(), dec.clone(), epoch));
        }
        opt_enc.learning_rate *= opts.lr_decay;
        opt_dec.learning_rate *= opts.lr_decay;
    }

    let (encoder, decoder, best_epoch) = match best {
        Some((_, e, d, k)) => (e, d, k),
        None => (enc, dec, 0),
    };
    Ok(PretrainOutcome {
        encoder,
        decoder,
        train_loss: train_curve,
        holdout_loss: hold_curve,
        best_epoch,
    })
}

/// Mean squared normalized error on column `j` when only that column is
/// hidden in every row.
pub fn column_reconstruction_error(
    features: &Tensor2,
    j: usize,
    outcome: &PretrainOutcome,
    cfg: &EncoderConfig,
) -> Result<f64> {
    let mut s = Tensor2::zeros(features.rows(), features.cols());
    for r in 0..features.rows() {
        s.set(r, j, 1.0);
    }
    let mask = SelfSupMask { s, p_s: 0.5 };
    let std = column_std(features);
    let mut enc = outcome.encoder.clone();
    let mut dec = outcome.decoder.clone();
    let batch = Masked {
        f: features,
        mask: &mask,
        std: &std,
    };
    let input = batch.mask.hide(batch.f)?;
    let prior = batch.mask.complement();
    let (out, _) = encoder_forward_cached(&input, Some(&prior), &mut enc, cfg, Mode::Infer)?;
    let (f_hat, _) = decoder_forward(&out.step_outputs(), &mut dec, &mask, Mode::Infer)?;
    let (loss, _) = masked_loss(&f_hat, features, &mask.s, &std)?;
    Ok(loss / features.rows() as f64)
}
