//! A trained encoder bound to its frozen schema, with inference and the
//! versioned on-disk container (magic `TITM`).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{bytes_to_f64s, f64s_to_bytes, utf8, ContainerReader, ContainerWriter};
use crate::diff::{softmax_rows, Mode, Tensor2};
use crate::encoder::{encoder_forward, EncoderConfig, Parameters, TabnetParams};
use crate::error::{Error, Result};
use crate::fusion::{FusionSchema, ThreatClass};
use crate::train::Phase;

pub const MODEL_MAGIC: &[u8; 4] = b"TITM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const INFER_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct TabNetModel {
    pub config: EncoderConfig,
    pub params: TabnetParams,
    pub schema: FusionSchema,
    pub phase: Phase,
    pub seed: u64,
    /// Configuration text the model was produced with.
    pub config_echo: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<ThreatClass>,
    /// Softmax probabilities, `B × 7`.
    pub probabilities: Tensor2,
}

/// Inference-mode logits; rows are scored in parallel chunks against copies
/// of the frozen parameters.
pub(crate) fn infer_logits(params: &TabnetParams, cfg: &EncoderConfig, x: &Tensor2) -> Result<Tensor2> {
    if x.rows() == 0 {
        return Ok(Tensor2::zeros(0, cfg.n_classes));
    }
    let starts: Vec<usize> = (0..x.rows()).step_by(INFER_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&start| {
            let end = (start + INFER_CHUNK).min(x.rows());
            let rows: Vec<usize> = (start..end).collect();
            let mut local = params.clone();
            encoder_forward(&x.select_rows(&rows), &mut local, cfg, Mode::Infer).map(|o| o.logits)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(x.rows() * cfg.n_classes);
    for p in parts {
        data.extend(p.into_data());
    }
    Tensor2::from_vec(x.rows(), cfg.n_classes, data)
}

/// Row-wise argmax; ties go to the lowest class index.
pub(crate) fn argmax_classes(scores: &Tensor2) -> Vec<ThreatClass> {
    (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            ThreatClass::from_index(best).expect("seven output columns")
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Meta {
    phase: Phase,
    seed: u64,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

fn tensor_index(p: &TabnetParams) -> Vec<TensorEntry> {
    let mut names = vec![];
    for k in 0..p.shared.len() {
        names.push(format!("shared.{k}"));
    }
    for (s, step) in p.steps.iter().enumerate() {
        for k in 0..step.blocks.len() {
            names.push(format!("step.{s}.block.{k}"));
        }
        if step.attention.is_some() {
            names.push(format!("step.{s}.attention"));
        }
    }
    names.push("head".into());
    let mut out = Vec::new();
    let mut i = 0;
    p.for_each_block(|b| {
        out.push(TensorEntry {
            name: format!("{}.weights", names[i]),
            rows: b.n_in(),
            cols: b.n_out(),
        });
        if b.has_bias {
            out.push(TensorEntry {
                name: format!("{}.bias", names[i]),
                rows: 1,
                cols: b.n_out(),
            });
        }
        i += 1;
    });
    out
}

fn bn_widths(p: &TabnetParams) -> Vec<usize> {
    let mut out = Vec::new();
    p.for_each_bn(|bn| out.push(bn.width()));
    out
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("plain data serializes")
}

fn from_json<'a, T: Deserialize<'a>>(bytes: &'a [u8], what: &str) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("{what}: {e}")))
}

impl TabNetModel {
    pub fn fingerprint(&self) -> String {
        self.schema.fingerprint()
    }

    pub fn check_schema(&self, schema: &FusionSchema) -> Result<()> {
        let (model, dataset) = (self.fingerprint(), schema.fingerprint());
        if model != dataset {
            return Err(Error::FingerprintMismatch { model, dataset });
        }
        Ok(())
    }

    pub fn predict(&self, features: &Tensor2) -> Result<Prediction> {
        if features.cols() != self.params.input_dim {
            return Err(Error::Width {
                expected: self.params.input_dim,
                found: features.cols(),
            });
        }
        let logits = infer_logits(&self.params, &self.config, features)?;
        let probabilities = softmax_rows(&logits);
        Ok(Prediction {
            labels: argmax_classes(&logits),
            probabilities,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ContainerWriter::new(MODEL_MAGIC, MODEL_FORMAT_VERSION);
        w.section(b"SCHM", self.schema.to_toml().as_bytes());
        w.section(b"FPRT", self.fingerprint().as_bytes());
        w.section(b"ECFG", toml::to_string(&self.config).expect("config serializes").as_bytes());
        w.section(
            b"META",
            &json(&Meta {
                phase: self.phase,
                seed: self.seed,
            }),
        );
        w.section(b"ECHO", self.config_echo.as_bytes());
        w.section(b"TIDX", &json(&tensor_index(&self.params)));
        w.section(b"TDAT", &f64s_to_bytes(&self.params.values()));
        w.section(b"BIDX", &json(&bn_widths(&self.params)));
        let mut stats = Vec::new();
        self.params.for_each_bn(|bn| {
            stats.extend_from_slice(&bn.running_mean);
            stats.extend_from_slice(&bn.running_var);
        });
        w.section(b"BDAT", &f64s_to_bytes(&stats));
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = ContainerReader::open(bytes, MODEL_MAGIC)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {version} is not supported (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        let schema = FusionSchema::from_toml(utf8(r.section(b"SCHM")?)?)?;
        let stored = utf8(r.section(b"FPRT")?)?;
        if stored != schema.fingerprint() {
            return Err(Error::Format(format!(
                "stored schema fingerprint {stored} does not match the embedded schema"
            )));
        }
        let config: EncoderConfig = toml::from_str(utf8(r.section(b"ECFG")?)?)
            .map_err(|e| Error::Format(format!("encoder config: {e}")))?;
        let meta: Meta = from_json(r.section(b"META")?, "metadata")?;
        let config_echo = utf8(r.section(b"ECHO")?)?.to_string();

        let mut params = TabnetParams::new(schema.fused_width(), &config, 0)?;
        let index: Vec<TensorEntry> = from_json(r.section(b"TIDX")?, "tensor index")?;
        if index != tensor_index(&params) {
            return Err(Error::Format("tensor layout does not match the encoder config".into()));
        }
        let values = bytes_to_f64s(r.section(b"TDAT")?)?;
        if values.len() != params.param_count() {
            return Err(Error::Format(format!(
                "expected {} parameter values, found {}",
                params.param_count(),
                values.len()
            )));
        }
        params.set_values(&values);

        let widths: Vec<usize> = from_json(r.section(b"BIDX")?, "normalization index")?;
        if widths != bn_widths(&params) {
            return Err(Error::Format("normalization layout does not match the encoder config".into()));
        }
        let stats = bytes_to_f64s(r.section(b"BDAT")?)?;
        if stats.len() != 2 * widths.iter().sum::<usize>() {
            return Err(Error::Format("normalization statistics have the wrong length".into()));
        }
        let mut pos = 0;
        params.for_each_bn_mut(|bn| {
            let w = bn.width();
            bn.running_mean.copy_from_slice(&stats[pos..pos + w]);
            bn.running_var.copy_from_slice(&stats[pos + w..pos + 2 * w]);
            pos += 2 * w;
        });
        r.finish()?;
        Ok(Self {
            config,
            params,
            schema,
            phase: meta.phase,
            seed: meta.seed,
            config_echo,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Free-function form of [`TabNetModel::predict`].
pub fn predict(model: &TabNetModel, features: &Tensor2) -> Result<Prediction> {
    model.predict(features)
}
