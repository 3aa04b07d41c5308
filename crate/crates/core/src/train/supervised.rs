use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::{Divergence, Phase};
use crate::diff::{softmax_cross_entropy, Mode};
use crate::encoder::{encoder_backward, encoder_forward_cached, EncoderConfig, EncoderGrad, TabnetParams};
use crate::error::{Error, Result};
use crate::fusion::{resample, stratified_partition, FusedDataset, ResampleSpec};
use crate::model::{infer_logits, TabNetModel};
use crate::optim::Adam;
use crate::rng::{batches, derive_seed, rng_for, shuffled, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Ghost batch size of the input normalization.
    pub virtual_batch: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub lambda_sparse: f64,
    pub seed: u64,
    /// Epochs without validation macro-F1 improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Stratified share of the data held out for early stopping; 0 validates on
    /// the training rows.
    pub validation_fraction: f64,
    pub resample: Option<ResampleSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 1024,
            virtual_batch: 128,
            learning_rate: 0.02,
            lr_decay: 0.95,
            lambda_sparse: 1e-3,
            seed: 0,
            early_stop_patience: 10,
            validation_fraction: 0.1,
            resample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size < 2 {
            return fail(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.virtual_batch == 0 || self.virtual_batch > self.batch_size {
            return fail(format!(
                "virtual_batch must be in 1..={}, got {}",
                self.batch_size, self.virtual_batch
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0) {
            return fail(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        if !(self.lambda_sparse >= 0.0) {
            return fail(format!("lambda_sparse must be >= 0, got {}", self.lambda_sparse));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if let Some(spec) = &self.resample {
            spec.validate()?;
        }
        Ok(())
    }

    /// The encoder settings actually used: training overrides sparsity weight
    /// and ghost batch size.
    pub fn effective(&self, enc: &EncoderConfig) -> EncoderConfig {
        EncoderConfig {
            lambda_sparse: self.lambda_sparse,
            virtual_batch: self.virtual_batch,
            ..enc.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    /// Mean training objective per epoch.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub validation_macro_f1: Vec<f64>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TabNetModel,
    pub history: TrainHistory,
}

#[derive(Serialize)]
struct Echo<'a> {
    train: &'a TrainConfig,
    encoder: &'a EncoderConfig,
}

/// Mini-batch training of cross-entropy plus the weighted sparsity term;
/// returns the checkpoint with the best validation macro-F1.
pub fn train(
    data: &FusedDataset,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
    warm_start: Option<&TabnetParams>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let eff = cfg.effective(enc);
    eff.validate()?;
    if data.class_counts.present().count() < 2 {
        return Err(Error::Config("training needs at least two classes present".into()));
    }
    let seed = cfg.seed;
    let (train_idx, val_idx) = if cfg.validation_fraction > 0.0 {
        stratified_partition(&data.labels, cfg.validation_fraction, derive_seed(seed, stream::VALIDATION, 0))?
    } else {
        let all: Vec<usize> = (0..data.len()).collect();
        (all.clone(), all)
    };
    let mut train_set = data.select(&train_idx);
    let val_set = data.select(&val_idx);
    if let Some(spec) = &cfg.resample {
        train_set = resample(&train_set, spec, derive_seed(seed, stream::RESAMPLE, 0))?;
    }
    if train_set.len() < 2 {
        return Err(Error::DegenerateBatch { rows: train_set.len() });
    }

    let d = data.width();
    let fresh = TabnetParams::new(d, &eff, derive_seed(seed, stream::ENCODER_INIT, 0))?;
    let mut params = match warm_start {
        Some(p) => {
            if p.input_dim != d || p.n_steps() != eff.n_steps || p.param_count() != fresh.param_count() {
                return Err(Error::Config(
                    "warm-start parameters do not match the encoder configuration".into(),
                ));
            }
            let mut p = p.clone();
            p.input_bn.virtual_batch = eff.virtual_batch;
            p
        }
        None => fresh,
    };
    let echo = toml::to_string(&Echo { train: cfg, encoder: enc })
        .map_err(|e| Error::Config(format!("cannot echo configuration: {e}")))?;

    let targets = train_set.label_indices();
    let val_targets = val_set.label_indices();
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = rng_for(seed, stream::SHUFFLE, 0);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, TabnetParams)> = None;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        let order = shuffled(train_set.len(), &mut rng);
        let epoch_start = params.clone();
        let (mut sum, mut count) = (0.0, 0usize);
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let x = train_set.features.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let diverged = |loss: f64, lr: f64, step: u64| {
                Error::Diverged(Box::new(Divergence {
                    phase: Phase::Supervised,
                    epoch,
                    step,
                    batch: b,
                    learning_rate: lr,
                    loss,
                    checkpoint: Some(epoch_start.clone()),
                }))
            };
            let (out, cache) = match encoder_forward_cached(&x, None, &mut params, &eff, Mode::Train) {
                Ok(v) => v,
                Err(Error::NumericOverflow { .. }) => {
                    return Err(diverged(f64::NAN, opt.learning_rate, opt.steps_taken()))
                }
                Err(e) => return Err(e),
            };
            let (ce, grad) = softmax_cross_entropy(&out.logits, &y)?;
            let loss = ce + eff.lambda_sparse * out.l_sparse;
            if !loss.is_finite() {
                return Err(diverged(loss, opt.learning_rate, opt.steps_taken()));
            }
            params.zero_grad();
            let g = EncoderGrad {
                logits: Some(&grad),
                step_outputs: None,
                sparse_weight: eff.lambda_sparse,
            };
            encoder_backward(&mut params, &eff, &out, &cache, g)?;
            opt.step(&mut params);
            sum += loss * idx.len() as f64;
            count += idx.len();
        }
        history.train_loss.push(sum / count as f64);

        let logits = match infer_logits(&params, &eff, &val_set.features) {
            Ok(l) => l,
            Err(Error::NumericOverflow { .. }) => {
                return Err(Error::Diverged(Box::new(Divergence {
                    phase: Phase::Supervised,
                    epoch,
                    step: opt.steps_taken(),
                    batch: 0,
                    learning_rate: opt.learning_rate,
                    loss: f64::NAN,
                    checkpoint: Some(epoch_start),
                })))
            }
            Err(e) => return Err(e),
        };
        let (val_loss, _) = softmax_cross_entropy(&logits, &val_targets)?;
        let predicted = crate::model::argmax_classes(&logits);
        let report = MetricsReport::from_predictions(&val_set.labels, &predicted)?;
        history.validation_loss.push(val_loss);
        history.validation_macro_f1.push(report.macro_f1);
        info!(
            "epoch {epoch}: train loss {:.6}, validation loss {val_loss:.6}, validation macro-F1 {:.4}",
            history.train_loss[epoch], report.macro_f1
        );

        if best.as_ref().is_none_or(|(f1, _)| report.macro_f1 > *f1) {
            best = Some((report.macro_f1, params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                info!("early stop after epoch {epoch}");
                break;
            }
        }
        opt.learning_rate *= cfg.lr_decay;
    }

    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok(TrainOutcome {
        model: TabNetModel {
            config: eff,
            params,
            schema: data.schema.clone(),
            phase: Phase::Supervised,
            seed,
            config_echo: echo,
        },
        history,
    })
}
