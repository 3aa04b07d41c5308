//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The desk-scale experiment reads `KDDTrain+.txt` from the directory named by
//! `TABITD_NSL_KDD_DIR`. Without it that criterion fails and the same protocol
//! is run on synthetic stand-in records for information only.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabitd_core::decoder::{
    column_std, decoder_backward, decoder_forward, reconstruction_loss, sample_mask, DecoderParams, SelfSupMask,
};
use tabitd_core::diff::{
    batch_norm, batch_norm_backward, glu, glu_backward, grad_check, linear_backward, linear_forward, relu,
    relu_backward, softmax_cross_entropy, sparsemax, sparsemax_rows, sparsemax_rows_backward, BnState,
    GradCheckOptions, Mode, ParamBlock, Tensor2,
};
use tabitd_core::encoder::{
    encoder_backward, encoder_forward, encoder_forward_cached, sparsity_loss, EncoderConfig, EncoderGrad,
    Parameters, TabnetParams,
};
use tabitd_core::fusion::synthetic::{synthetic_ids_records, synthetic_ueba_records, IdsMix};
use tabitd_core::fusion::{
    harmonize_split, parse_ids_records, stratified_partition, FusedDataset, FusionSchema, RawRecord, ResampleSpec,
    ThreatClass,
};
use tabitd_core::interpret::{aggregate_mask, step_importance};
use tabitd_core::model::TabNetModel;
use tabitd_core::train::{evaluate, reference_table, train, TrainConfig};
use tabitd_core::Result;

const PRIMITIVE_TOL: f64 = 1e-5;
const END_TO_END_TOL: f64 = 1e-4;
const STOCHASTIC_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure that cannot be decided in this environment.
    unavailable: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            unavailable: false,
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rows: usize, cols: usize, r: &mut ChaCha8Rng, scale: f64) -> Tensor2 {
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-scale..scale)).collect()).unwrap()
}

fn dot(a: &Tensor2, b: &Tensor2) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// 1. sparsemax against a bisection oracle

/// Euclidean projection onto the simplex by bisection on the threshold.
fn simplex_projection(z: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| z.iter().map(|&v| (v - tau).max(0.0)).sum::<f64>();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (max - 1.0, max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    z.iter().map(|&v| (v - tau).max(0.0)).collect()
}

fn sparsemax_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut max_diff, mut max_sum_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let d = r.gen_range(2..=64);
        let scale = [0.1, 1.0, 10.0][r.gen_range(0..3)];
        let z: Vec<f64> = (0..d).map(|_| r.gen_range(-scale..scale)).collect();
        let ours = sparsemax(&z);
        let oracle = simplex_projection(&z);
        for (a, b) in ours.iter().zip(&oracle) {
            max_diff = max_diff.max((a - b).abs());
        }
        max_sum_err = max_sum_err.max((ours.iter().sum::<f64>() - 1.0).abs());
    }
    let elapsed = start.elapsed();
    Outcome::new(
        max_diff < 1e-10 && max_sum_err < 1e-12 && elapsed < Duration::from_secs(5),
        format!(
            "1000 vectors, max |Δ| {max_diff:.2e} (< 1e-10), max |Σ−1| {max_sum_err:.2e} (< 1e-12), {:.2?} (< 5 s)",
            elapsed
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. finite-difference gradient checks

fn check(
    name: &str,
    points: usize,
    tol: f64,
    mut one: impl FnMut(u64) -> Result<(f64, usize)>,
    notes: &mut Vec<String>,
) -> bool {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..points as u64 {
        match one(seed) {
            Ok((err, n)) => {
                worst = worst.max(err);
                checked += n;
            }
            Err(e) => {
                notes.push(format!("{name}: {e}"));
                return false;
            }
        }
    }
    notes.push(format!("{name} {worst:.1e}"));
    checked > 0 && worst < tol
}

fn opts() -> GradCheckOptions {
    GradCheckOptions::default()
}

fn linear_point(seed: u64) -> Result<(f64, usize)> {
    let mut r = rng(seed);
    let x = random(4, 3, &mut r, 2.0);
    let w = random(4, 5, &mut r, 1.0);
    let mut p = ParamBlock::glorot(3, 5, true, &mut r);
    p.bias = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
    p.zero_grad();
    let grad_x = linear_backward(&x, &mut p, &w)?;
    let mut analytic = grad_x.data().to_vec();
    analytic.extend_from_slice(p.grad_weights().data());
    analytic.extend_from_slice(&p.grad_bias);
    let mut point = x.data().to_vec();
    point.extend_from_slice(p.weights.data());
    point.extend_from_slice(&p.bias);
    let report = grad_check(
        |v| {
            let x = Tensor2::from_vec(4, 3, v[..12].to_vec())?;
            let mut q = p.clone();
            q.weights = Tensor2::from_vec(3, 5, v[12..27].to_vec())?;
            q.bias = v[27..].to_vec();
            Ok(dot(&linear_forward(&x, &q)?, &w))
        },
        &point,
        &analytic,
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn elementwise_point(
    seed: u64,
    f: fn(&Tensor2) -> Tensor2,
    back: fn(&Tensor2, &Tensor2) -> Result<Tensor2>,
) -> Result<(f64, usize)> {
    let mut r = rng(seed);
    let x = random(5, 4, &mut r, 3.0);
    let w = random(5, 4, &mut r, 1.0);
    let analytic = back(&x, &w)?;
    let report = grad_check(
        |v| Ok(dot(&f(&Tensor2::from_vec(5, 4, v.to_vec())?), &w)),
        x.data(),
        analytic.data(),
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn softmax_ce_point(seed: u64) -> Result<(f64, usize)> {
    let mut r = rng(seed);
    let logits = random(6, 7, &mut r, 3.0);
    let targets: Vec<usize> = (0..6).map(|_| r.gen_range(0..7)).collect();
    let (_, grad) = softmax_cross_entropy(&logits, &targets)?;
    let report = grad_check(
        |v| Ok(softmax_cross_entropy(&Tensor2::from_vec(6, 7, v.to_vec())?, &targets)?.0),
        logits.data(),
        grad.data(),
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn sparsemax_point(seed: u64) -> Result<(f64, usize)> {
    let mut r = rng(seed);
    let z = random(4, 6, &mut r, 1.5);
    let w = random(4, 6, &mut r, 1.0);
    let p = sparsemax_rows(&z);
    let analytic = sparsemax_rows_backward(&p, &w);
    let report = grad_check(
        |v| Ok(dot(&sparsemax_rows(&Tensor2::from_vec(4, 6, v.to_vec())?), &w)),
        z.data(),
        analytic.data(),
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn batch_norm_point(seed: u64) -> Result<(f64, usize)> {
    let mut r = rng(seed);
    let x = random(8, 3, &mut r, 2.0);
    let w = random(8, 3, &mut r, 1.0);
    let ghost = seed % 2 == 0;
    let state = BnState::new(3, 0.1, 1e-5, 4)?;
    let (_, cache) = batch_norm(&x, &mut state.clone(), Mode::Train, ghost)?;
    let analytic = batch_norm_backward(&cache, &w)?;
    let report = grad_check(
        |v| {
            let (y, _) = batch_norm(&Tensor2::from_vec(8, 3, v.to_vec())?, &mut state.clone(), Mode::Train, ghost)?;
            Ok(dot(&y, &w))
        },
        x.data(),
        analytic.data(),
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn tiny_encoder(seed: u64) -> EncoderConfig {
    EncoderConfig {
        n_steps: 1 + (seed % 3) as usize,
        n_d: 3,
        n_a: 3,
        lambda_sparse: 0.01,
        virtual_batch: 4,
        ..EncoderConfig::default()
    }
}

fn supervised_loss(f: &Tensor2, p: &mut TabnetParams, cfg: &EncoderConfig, y: &[usize]) -> Result<f64> {
    let out = encoder_forward(f, p, cfg, Mode::Train)?;
    Ok(softmax_cross_entropy(&out.logits, y)?.0 + cfg.lambda_sparse * out.l_sparse)
}

fn encoder_point(seed: u64) -> Result<(f64, usize)> {
    let cfg = tiny_encoder(seed);
    let mut r = rng(100 + seed);
    let f = random(8, 5, &mut r, 2.0);
    let y: Vec<usize> = (0..8).map(|_| r.gen_range(0..7)).collect();
    let mut params = TabnetParams::new(5, &cfg, seed)?;
    params.zero_grad();
    let (out, cache) = encoder_forward_cached(&f, None, &mut params, &cfg, Mode::Train)?;
    let (_, grad) = softmax_cross_entropy(&out.logits, &y)?;
    let g = EncoderGrad {
        logits: Some(&grad),
        step_outputs: None,
        sparse_weight: cfg.lambda_sparse,
    };
    let grad_f = encoder_backward(&mut params, &cfg, &out, &cache, g)?;
    let n = params.param_count();
    let mut point = params.values();
    point.extend_from_slice(f.data());
    let mut analytic = params.grads();
    analytic.extend_from_slice(grad_f.data());
    let mut probe = params.clone();
    let report = grad_check(
        |v| {
            probe.set_values(&v[..n]);
            supervised_loss(&Tensor2::from_vec(8, 5, v[n..].to_vec())?, &mut probe, &cfg, &y)
        },
        &point,
        &analytic,
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn pretext_loss(
    f: &Tensor2,
    mask: &SelfSupMask,
    enc: &mut TabnetParams,
    dec: &mut DecoderParams,
    cfg: &EncoderConfig,
) -> Result<f64> {
    let (out, _) = encoder_forward_cached(&mask.hide(f)?, Some(&mask.complement()), enc, cfg, Mode::Train)?;
    let (f_hat, _) = decoder_forward(&out.step_outputs(), dec, mask, Mode::Train)?;
    Ok(reconstruction_loss(&f_hat, f, mask)? + cfg.lambda_sparse * out.l_sparse)
}

fn reconstruction_point(seed: u64) -> Result<(f64, usize)> {
    let cfg = tiny_encoder(seed);
    let mut r = rng(200 + seed);
    let f = random(8, 4, &mut r, 2.0);
    let mask = sample_mask(8, 4, 0.4, seed)?;
    let std = column_std(&f);
    let mut enc = TabnetParams::new(4, &cfg, seed)?;
    let mut dec = DecoderParams::new(4, &cfg, 2, seed + 1)?;
    let (out, cache) = encoder_forward_cached(&mask.hide(&f)?, Some(&mask.complement()), &mut enc, &cfg, Mode::Train)?;
    let (f_hat, dcache) = decoder_forward(&out.step_outputs(), &mut dec, &mask, Mode::Train)?;
    // ∂/∂f̂ of Σ ((f̂ − f)·S / std)².
    let mut grad = Tensor2::zeros(8, 4);
    for b in 0..8 {
        for j in 0..4 {
            let s = mask.s.get(b, j);
            grad.set(b, j, 2.0 * (f_hat.get(b, j) - f.get(b, j)) * s * s / (std[j] * std[j]));
        }
    }
    enc.zero_grad();
    dec.visit_mut(&mut |b| b.zero_grad());
    let grad_steps = decoder_backward(&mut dec, &dcache, &grad)?;
    let g = EncoderGrad {
        logits: None,
        step_outputs: Some(&grad_steps),
        sparse_weight: cfg.lambda_sparse,
    };
    encoder_backward(&mut enc, &cfg, &out, &cache, g)?;
    let n = enc.param_count();
    let mut point = enc.values();
    point.extend(dec.values());
    let mut analytic = enc.grads();
    analytic.extend(dec.grads());
    let (mut e2, mut d2) = (enc.clone(), dec.clone());
    let report = grad_check(
        |v| {
            e2.set_values(&v[..n]);
            d2.set_values(&v[n..]);
            pretext_loss(&f, &mask, &mut e2, &mut d2, &cfg)
        },
        &point,
        &analytic,
        opts(),
    )?;
    Ok((report.max_rel_error, report.checked))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    ok &= check("linear", 100, PRIMITIVE_TOL, linear_point, &mut notes);
    ok &= check("glu", 100, PRIMITIVE_TOL, |s| elementwise_point(s, glu, glu_backward), &mut notes);
    ok &= check("relu", 100, PRIMITIVE_TOL, |s| elementwise_point(s, relu, relu_backward), &mut notes);
    ok &= check("softmax-ce", 100, PRIMITIVE_TOL, softmax_ce_point, &mut notes);
    ok &= check("sparsemax", 100, PRIMITIVE_TOL, sparsemax_point, &mut notes);
    ok &= check("batch-norm", 100, PRIMITIVE_TOL, batch_norm_point, &mut notes);
    ok &= check("encoder", 50, END_TO_END_TOL, encoder_point, &mut notes);
    ok &= check("encoder+decoder", 50, END_TO_END_TOL, reconstruction_point, &mut notes);
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    Outcome::new(
        ok,
        format!(
            "max rel. error {} (primitives < 1e-5, end-to-end < 1e-4), {:.1?} (< 2 min)",
            notes.join(", "),
            elapsed
        ),
    )
}

// ---------------------------------------------------------------------------
// 3 and 4. mask invariants and the sparsity term

fn random_pass(seed: u64) -> Result<(tabitd_core::encoder::EncoderOutput, usize)> {
    let mut r = rng(300 + seed);
    let d = r.gen_range(2..=12);
    let cfg = EncoderConfig {
        n_steps: r.gen_range(1..=4),
        n_d: 4,
        n_a: 4,
        gamma: r.gen_range(1.0..2.0),
        ..EncoderConfig::default()
    };
    let mut params = TabnetParams::new(d, &cfg, seed)?;
    let x = random(16, d, &mut r, 3.0);
    let mode = if seed % 2 == 0 { Mode::Train } else { Mode::Infer };
    Ok((encoder_forward(&x, &mut params, &cfg, mode)?, d))
}

fn mask_invariants() -> Outcome {
    let (mut worst_mask, mut worst_agg, mut degenerate, mut rows) = (0.0f64, 0.0f64, 0, 0);
    for seed in 0..50 {
        let (out, _) = match random_pass(seed) {
            Ok(v) => v,
            Err(e) => return Outcome::new(false, format!("forward pass failed: {e}")),
        };
        for m in out.masks() {
            for r in 0..m.rows() {
                worst_mask = worst_mask.max((m.row(r).iter().sum::<f64>() - 1.0).abs());
            }
        }
        let per_step: Vec<Vec<f64>> = out.steps.iter().map(|s| step_importance(&s.d)).collect();
        let b = out.logits.rows();
        let etas = Tensor2::from_vec(
            b,
            per_step.len(),
            (0..b).flat_map(|r| per_step.iter().map(move |e| e[r])).collect(),
        )
        .unwrap();
        let (agg, flags) = aggregate_mask(&out.masks(), &etas).unwrap();
        for r in 0..b {
            rows += 1;
            if flags[r] {
                degenerate += 1;
                continue;
            }
            worst_agg = worst_agg.max((agg.row(r).iter().sum::<f64>() - 1.0).abs());
        }
    }
    Outcome::new(
        worst_mask < STOCHASTIC_TOL && worst_agg < STOCHASTIC_TOL && rows > degenerate,
        format!(
            "50 passes, max |Σ M − 1| {worst_mask:.1e}, max |Σ M_agg − 1| {worst_agg:.1e} (< 1e-9), {degenerate}/{rows} degenerate rows"
        ),
    )
}

fn mean_entropy(lambda: f64) -> Result<f64> {
    let mut r = rng(77);
    let x = random(240, 8, &mut r, 1.0);
    let labels: Vec<ThreatClass> = (0..240)
        .map(|i| if x.get(i, 0) + 0.5 * x.get(i, 1) > 0.0 { ThreatClass::DoS } else { ThreatClass::Normal })
        .collect();
    let data = FusedDataset::from_matrix(x, labels)?;
    let enc = EncoderConfig {
        n_steps: 3,
        n_d: 8,
        n_a: 8,
        ..EncoderConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 64,
        virtual_batch: 32,
        validation_fraction: 0.0,
        early_stop_patience: 0,
        lambda_sparse: lambda,
        seed: 5,
        ..TrainConfig::default()
    };
    let mut model = train(&data, &enc, &cfg, None)?.model;
    let cfg = model.config.clone();
    let out = encoder_forward(&data.features, &mut model.params, &cfg, Mode::Infer)?;
    Ok(sparsity_loss(&out.masks(), cfg.epsilon))
}

fn sparsity_bounds() -> Outcome {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut min_loss = f64::INFINITY;
    for seed in 0..50 {
        let Ok((out, d)) = random_pass(seed) else {
            return Outcome::new(false, "forward pass failed".into());
        };
        worst_excess = worst_excess.max(out.l_sparse - (d as f64).ln());
        min_loss = min_loss.min(out.l_sparse);
    }
    let one_hot: Vec<Tensor2> = (0..3)
        .map(|s| {
            let mut m = Tensor2::zeros(10, 6);
            for r in 0..10 {
                m.set(r, (r + s) % 6, 1.0);
            }
            m
        })
        .collect();
    let one_hot_loss = sparsity_loss(&one_hot, 1e-15);
    let (dense, sparse) = match (mean_entropy(0.0), mean_entropy(1.0)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, format!("training failed: {e}")),
    };
    Outcome::new(
        min_loss >= 0.0 && worst_excess <= 1e-3 && one_hot_loss < 1e-3 && sparse < dense,
        format!(
            "L_sparse min {min_loss:.2e}, max (L − log D) {worst_excess:.3} (≤ 1e-3); one-hot {one_hot_loss:.1e} (< 1e-3); \
             trained entropy λ=1 {sparse:.4} < λ=0 {dense:.4}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. reconstruction loss contract

fn reconstruction_contract() -> Outcome {
    let mut r = rng(9);
    let f = random(12, 5, &mut r, 2.0);
    let mask = sample_mask(12, 5, 0.3, 4).unwrap();
    let perfect = reconstruction_loss(&f, &f, &mask).unwrap();

    let f_hat = random(12, 5, &mut r, 2.0);
    let base = reconstruction_loss(&f_hat, &f, &mask).unwrap();
    let mut perturbed = f_hat.clone();
    let mut touched = 0;
    for b in 0..12 {
        for j in 0..5 {
            if mask.s.get(b, j) == 0.0 {
                perturbed.set(b, j, f_hat.get(b, j) + r.gen_range(-100.0..100.0));
                touched += 1;
            }
        }
    }
    let after = reconstruction_loss(&perturbed, &f, &mask).unwrap();

    let hand_f = Tensor2::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
    let hand_hat = Tensor2::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
    let ones = SelfSupMask {
        s: Tensor2::filled(2, 1, 1.0),
        p_s: 0.5,
    };
    let hand = reconstruction_loss(&hand_hat, &hand_f, &ones).unwrap();
    Outcome::new(
        perfect == 0.0 && after == base && touched > 0 && hand == 2.0,
        format!(
            "perfect {perfect}, S=0 perturbation Δ {} over {touched} cells, hand case {hand}",
            after - base
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. desk-scale experiment

const TRAIN_ROWS: usize = 20_000;
const TEST_ROWS: usize = 5_000;

struct Desk {
    accuracy: f64,
    macro_f1: f64,
    cpu: Duration,
    u2r_plain: Vec<f64>,
    u2r_resampled: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn cpu_time() -> Duration {
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    // SAFETY: `usage` is a valid out-pointer for getrusage.
    unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) };
    let tv = |t: libc::timeval| Duration::new(t.tv_sec as u64, t.tv_usec as u32 * 1000);
    tv(usage.ru_utime) + tv(usage.ru_stime)
}

/// Stratified 25k-row draw from the IDS records plus synthetic UEBA rows,
/// split 20k/5k, then the default training recipe.
fn desk_scale(ids: &[RawRecord], schema: &FusionSchema) -> Result<Desk> {
    let cpu_start = cpu_time();
    let labels = ids
        .iter()
        .map(|r| schema.map_label(&r.raw_label, r.source))
        .collect::<Result<Vec<_>>>()?;
    let wanted = TRAIN_ROWS + TEST_ROWS;
    let sample: Vec<RawRecord> = if ids.len() > wanted {
        let (_, keep) = stratified_partition(&labels, wanted as f64 / ids.len() as f64, 17)?;
        keep.into_iter().map(|i| ids[i].clone()).collect()
    } else {
        ids.to_vec()
    };
    let ueba = synthetic_ueba_records(2_000, 500, 17, schema);
    let (train_set, test_set) = harmonize_split(&sample, &ueba, schema, 0.2, 17)?;

    let enc = EncoderConfig::default();
    let base = TrainConfig::default();
    let model = train(&train_set, &enc, &base, None)?.model;
    let report = evaluate(&model, &test_set)?;
    let cpu = cpu_time() - cpu_start;

    let u2r = |resample: Option<ResampleSpec>, seed: u64| -> Result<f64> {
        let cfg = TrainConfig {
            seed,
            resample,
            ..base.clone()
        };
        let model = train(&train_set, &enc, &cfg, None)?.model;
        Ok(evaluate(&model, &test_set)?
            .class(ThreatClass::U2R)
            .map_or(0.0, |m| m.recall))
    };
    let spec = ResampleSpec::new(0.1)?;
    let mut plain = Vec::new();
    let mut resampled = Vec::new();
    for seed in 0..5 {
        plain.push(u2r(None, seed)?);
        resampled.push(u2r(Some(spec), seed)?);
    }
    Ok(Desk {
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
        cpu,
        u2r_plain: plain,
        u2r_resampled: resampled,
    })
}

fn judge(d: &Desk) -> (bool, String) {
    let (mp, mr) = (median(&d.u2r_plain), median(&d.u2r_resampled));
    let pass = d.accuracy >= 0.90 && d.macro_f1 >= 0.80 && d.cpu <= Duration::from_secs(15 * 60) && mr >= mp;
    let aspirational = reference_table("paper-ours-nsl-ueba").ok().and_then(|t| t.accuracy);
    (
        pass,
        format!(
            "accuracy {:.4} (≥ 0.90), macro-F1 {:.4} (≥ 0.80), {:.0?} CPU (≤ 15 min), median U2R recall resampled {mr:.3} ≥ plain {mp:.3}; published accuracy {} is aspirational",
            d.accuracy,
            d.macro_f1,
            d.cpu,
            aspirational.map_or("n/a".into(), |a| format!("{a:.4}"))
        ),
    )
}

fn desk_scale_proxy() -> (Outcome, Option<String>) {
    let schema = FusionSchema::default();
    let dir = std::env::var_os("TABITD_NSL_KDD_DIR").map(PathBuf::from);
    let file = dir.as_ref().map(|d| d.join("KDDTrain+.txt"));
    match file.as_ref().filter(|f| f.is_file()) {
        Some(path) => {
            let parsed = std::fs::File::open(path)
                .map_err(|e| e.to_string())
                .and_then(|f| parse_ids_records(std::io::BufReader::new(f), &schema).map_err(|e| e.to_string()));
            let result = parsed.and_then(|ids| desk_scale(&ids, &schema).map_err(|e| e.to_string()));
            match result {
                Ok(d) => {
                    let (pass, detail) = judge(&d);
                    (Outcome::new(pass, format!("NSL-KDD {}: {detail}", path.display())), None)
                }
                Err(e) => (Outcome::new(false, format!("NSL-KDD run failed: {e}")), None),
            }
        }
        None => {
            let looked = file.map_or("TABITD_NSL_KDD_DIR is not set".to_string(), |f| {
                format!("{} not found", f.display())
            });
            let outcome = Outcome {
                pass: false,
                detail: format!("public NSL-KDD data unavailable ({looked}); criterion not evaluated"),
                unavailable: true,
            };
            let ids = synthetic_ids_records(&IdsMix::nsl_kdd_like(TRAIN_ROWS + TEST_ROWS, 30), 17, &schema);
            let proxy = match desk_scale(&ids, &schema) {
                Ok(d) => {
                    let (pass, detail) = judge(&d);
                    format!("synthetic stand-in, same protocol ({}): {detail}", if pass { "met" } else { "not met" })
                }
                Err(e) => format!("synthetic stand-in failed: {e}"),
            };
            (outcome, Some(proxy))
        }
    }
}

// ---------------------------------------------------------------------------
// 7. determinism and persistence

fn tabitd(args: &[&str]) -> std::io::Result<std::process::Output> {
    Command::new(env!("CARGO_BIN_EXE_tabitd"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
}

fn pipeline(dir: &Path, tag: &str) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let p = |n: &str| dir.join(format!("{tag}-{n}"));
    let s = |p: &PathBuf| p.to_str().unwrap().to_string();
    let run = |args: Vec<String>| -> std::result::Result<(), String> {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = tabitd(&refs).map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{}: {}", args[0], String::from_utf8_lossy(&out.stderr)))
        }
    };
    let ids = dir.join("ids.csv");
    let ueba = dir.join("ueba.csv");
    run(vec![
        "fuse".into(),
        "--ids".into(),
        s(&ids),
        "--ueba".into(),
        s(&ueba),
        "--out".into(),
        s(&p("fused.tds")),
        "--seed".into(),
        "3".into(),
    ])?;
    run(vec![
        "train".into(),
        "--data".into(),
        s(&p("fused.tds")),
        "--out".into(),
        s(&p("model.titm")),
        "--seed".into(),
        "4".into(),
        "--epochs".into(),
        "4".into(),
        "--set".into(),
        "train.batch_size=128".into(),
        "--set".into(),
        "train.virtual_batch=32".into(),
    ])?;
    run(vec![
        "evaluate".into(),
        "--model".into(),
        s(&p("model.titm")),
        "--data".into(),
        s(&p("fused.test.tds")),
        "--out".into(),
        s(&p("eval")),
        "--reference".into(),
        "paper-ours-kdd-ueba".into(),
    ])?;
    let mut files = Vec::new();
    for name in [
        "fused.tds",
        "fused.test.tds",
        "model.titm",
        "model.titm.history.csv",
        "eval/report.txt",
        "eval/report.json",
        "eval/metrics.csv",
        "eval/delta.csv",
    ] {
        let path = dir.join(format!("{tag}-{name}"));
        files.push((name.to_string(), std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?));
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let schema = FusionSchema::default();
    let ids: Vec<String> = tabitd_core::fusion::synthetic::synthetic_ids_lines(&IdsMix::uniform(40), 8);
    std::fs::write(dir.path().join("ids.csv"), ids.join("\n")).unwrap();
    std::fs::write(
        dir.path().join("ueba.csv"),
        tabitd_core::fusion::synthetic::synthetic_ueba_csv(40, 40, 8),
    )
    .unwrap();
    let (a, b) = match (pipeline(dir.path(), "a"), pipeline(dir.path(), "b")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, format!("pipeline failed: {e}")),
    };
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();

    let model = TabNetModel::load(dir.path().join("a-model.titm")).unwrap();
    let reloaded = TabNetModel::from_bytes(&model.to_bytes()).unwrap();
    let mut r = rng(5);
    let probe = random(300, schema.fused_width(), &mut r, 4.0);
    let p1 = model.predict(&probe).unwrap();
    let p2 = reloaded.predict(&probe).unwrap();
    let bitwise = p1
        .probabilities
        .data()
        .iter()
        .zip(p2.probabilities.data())
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && p1.labels == p2.labels;
    Outcome::new(
        differing.is_empty() && bitwise,
        format!(
            "{} artifacts compared across fuse/train/evaluate reruns, {} differ{}; round-trip predictions bitwise equal: {bitwise}",
            a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. bundled reference tables

fn show(v: Option<f64>) -> String {
    v.map_or("missing".into(), |v| format!("{v:.4}"))
}

fn reference_fidelity() -> Outcome {
    let get = |name: &str, class: ThreatClass, metric: &str| {
        reference_table(name).ok().and_then(|t| t.value(class, metric))
    };
    let ours_u2r = get("paper-ours-nsl-ueba", ThreatClass::U2R, "f1");
    let cat_u2r = get("paper-catboost-nsl-ueba", ThreatClass::U2R, "f1");
    let kdd_probe = get("paper-ours-kdd-ueba", ThreatClass::Probe, "precision");
    Outcome::new(
        ours_u2r == Some(0.9370) && cat_u2r == Some(0.0) && kdd_probe == Some(1.0),
        format!(
            "ours/NSL U2R F1 {}, CatBoost/NSL U2R F1 {}, ours/KDD Probe precision {}",
            show(ours_u2r),
            show(cat_u2r),
            show(kdd_probe)
        ),
    )
}

fn main() {
    let strict = std::env::var_os("TABITD_ACCEPTANCE_STRICT").is_some();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut notes = Vec::new();
    results.push(("1 sparsemax oracle", sparsemax_oracle()));
    results.push(("2 gradient checks", gradient_checks()));
    results.push(("3 mask row sums", mask_invariants()));
    results.push(("4 sparsity term", sparsity_bounds()));
    results.push(("5 reconstruction loss", reconstruction_contract()));
    let (desk, proxy) = desk_scale_proxy();
    results.push(("6 desk-scale NSL-KDD", desk));
    if let Some(p) = proxy {
        notes.push(format!("6 (info) {p}"));
    }
    results.push(("7 determinism", determinism()));
    results.push(("8 reference tables", reference_fidelity()));

    println!("acceptance");
    for (name, o) in &results {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    for n in &notes {
        println!("       {n}");
    }
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("{passed}/{} criteria passed", results.len());
    let hard_failures = results
        .iter()
        .filter(|(_, o)| !o.pass && (strict || !o.unavailable))
        .count();
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
