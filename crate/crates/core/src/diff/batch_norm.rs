//! Batch normalization without affine parameters, with optional ghost (virtual) batches.

use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Running statistics and hyperparameters for one normalization layer.
///
/// Running statistics follow `r ← (1 − m)·r + m·batch_stat`, one update per
/// (virtual) batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    pub virtual_batch: usize,
}

impl BnState {
    pub fn new(width: usize, momentum: f64, epsilon: f64, virtual_batch: usize) -> Result<Self> {
        if !(momentum > 0.0 && momentum <= 1.0) {
            return Err(Error::Config(format!("BN momentum must be in (0, 1], got {momentum}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("BN epsilon must be positive, got {epsilon}")));
        }
        if virtual_batch == 0 {
            return Err(Error::Config("virtual batch size must be at least 1".into()));
        }
        Ok(Self {
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum,
            epsilon,
            virtual_batch,
        })
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }
}

/// Saved activations needed by [`batch_norm_backward`].
#[derive(Debug, Clone)]
pub struct BnCache {
    mode: Mode,
    x_hat: Tensor2,
    /// `(start_row, end_row, per-column 1/√(σ²+ε))` per normalization group.
    groups: Vec<(usize, usize, Vec<f64>)>,
}

/// Row ranges normalized together. A trailing chunk of a single row is merged
/// into its predecessor so every group has at least two rows.
fn chunk_bounds(rows: usize, virtual_batch: usize, ghost: bool) -> Vec<(usize, usize)> {
    if !ghost || virtual_batch >= rows {
        return vec![(0, rows)];
    }
    let mut bounds: Vec<(usize, usize)> = (0..rows)
        .step_by(virtual_batch)
        .map(|s| (s, (s + virtual_batch).min(rows)))
        .collect();
    if bounds.len() > 1 {
        let (s, e) = *bounds.last().expect("non-empty");
        if e - s == 1 {
            bounds.pop();
            bounds.last_mut().expect("non-empty").1 = e;
        }
    }
    bounds
}

pub fn batch_norm(
    x: &Tensor2,
    state: &mut BnState,
    mode: Mode,
    ghost: bool,
) -> Result<(Tensor2, BnCache)> {
    let cols = x.cols();
    if cols != state.width() {
        return Err(Error::dim("batch_norm", state.width(), cols));
    }
    let eps = state.epsilon;
    let mut x_hat = Tensor2::zeros(x.rows(), cols);

    if mode == Mode::Infer {
        let inv_std: Vec<f64> = state
            .running_var
            .iter()
            .map(|v| 1.0 / (v + eps).sqrt())
            .collect();
        for r in 0..x.rows() {
            let out = x_hat.row_mut(r);
            for (c, v) in x.row(r).iter().enumerate() {
                out[c] = (v - state.running_mean[c]) * inv_std[c];
            }
        }
        return Ok((
            x_hat.clone(),
            BnCache {
                mode,
                x_hat,
                groups: vec![(0, x.rows(), inv_std)],
            },
        ));
    }

    if x.rows() < 2 {
        return Err(Error::DegenerateBatch { rows: x.rows() });
    }
    let mut groups = Vec::new();
    for (start, end) in chunk_bounds(x.rows(), state.virtual_batch, ghost) {
        let n = (end - start) as f64;
        let mut mean = vec![0.0; cols];
        for r in start..end {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; cols];
        for r in start..end {
            for (c, v) in x.row(r).iter().enumerate() {
                let d = v - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        for r in start..end {
            let out = x_hat.row_mut(r);
            for (c, v) in x.row(r).iter().enumerate() {
                out[c] = (v - mean[c]) * inv_std[c];
            }
        }
        let m = state.momentum;
        for c in 0..cols {
            state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mean[c];
            state.running_var[c] = (1.0 - m) * state.running_var[c] + m * var[c];
        }
        groups.push((start, end, inv_std));
    }
    Ok((
        x_hat.clone(),
        BnCache {
            mode,
            x_hat,
            groups,
        },
    ))
}

/// Exact gradient through the per-group mean and variance.
pub fn batch_norm_backward(cache: &BnCache, grad_y: &Tensor2) -> Result<Tensor2> {
    grad_y.expect_shape("batch_norm_backward", cache.x_hat.shape())?;
    let cols = grad_y.cols();
    let mut grad_x = Tensor2::zeros(grad_y.rows(), cols);
    for (start, end, inv_std) in &cache.groups {
        if cache.mode == Mode::Infer {
            for r in *start..*end {
                let out = grad_x.row_mut(r);
                for (c, g) in grad_y.row(r).iter().enumerate() {
                    out[c] = g * inv_std[c];
                }
            }
            continue;
        }
        let n = (end - start) as f64;
        let mut sum_g = vec![0.0; cols];
        let mut sum_gx = vec![0.0; cols];
        for r in *start..*end {
            let xh = cache.x_hat.row(r);
            for (c, g) in grad_y.row(r).iter().enumerate() {
                sum_g[c] += g;
                sum_gx[c] += g * xh[c];
            }
        }
        for r in *start..*end {
            let xh = cache.x_hat.row(r);
            let out = grad_x.row_mut(r);
            for (c, g) in grad_y.row(r).iter().enumerate() {
                out[c] = inv_std[c] * (g - sum_g[c] / n - xh[c] * sum_gx[c] / n);
            }
        }
    }
    Ok(grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(width: usize, eps: f64, vb: usize) -> BnState {
        BnState::new(width, 0.1, eps, vb).unwrap()
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Tensor2::from_rows(&[vec![4.0, 1.0], vec![4.0, 2.0], vec![4.0, 3.0]]).unwrap();
        let (y, _) = batch_norm(&x, &mut state(2, 1e-5, 8), Mode::Train, false).unwrap();
        for r in 0..3 {
            assert_eq!(y.get(r, 0), 0.0);
        }
    }

    #[test]
    fn hand_z_score() {
        let x = Tensor2::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let (y, _) = batch_norm(&x, &mut state(1, 1e-12, 8), Mode::Train, false).unwrap();
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in y.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn ghost_batches_are_independent() {
        let x = Tensor2::from_vec(4, 1, vec![0.0, 2.0, 100.0, 300.0]).unwrap();
        let (y, _) = batch_norm(&x, &mut state(1, 1e-12, 2), Mode::Train, true).unwrap();
        for (a, b) in y.data().iter().zip([-1.0, 1.0, -1.0, 1.0]) {
            assert!((a - b).abs() < 1e-9);
        }
        let (full, _) = batch_norm(&x, &mut state(1, 1e-12, 2), Mode::Train, false).unwrap();
        assert!((full.get(0, 0) + 1.0).abs() > 0.1);
    }

    #[test]
    fn trailing_singleton_chunk_is_merged() {
        assert_eq!(chunk_bounds(5, 2, true), vec![(0, 2), (2, 5)]);
        assert_eq!(chunk_bounds(6, 2, true), vec![(0, 2), (2, 4), (4, 6)]);
        assert_eq!(chunk_bounds(6, 4, true), vec![(0, 4), (4, 6)]);
        assert_eq!(chunk_bounds(6, 2, false), vec![(0, 6)]);
    }

    #[test]
    fn single_row_train_batch_is_degenerate() {
        let x = Tensor2::zeros(1, 3);
        let err = batch_norm(&x, &mut state(3, 1e-5, 1), Mode::Train, false).unwrap_err();
        assert!(matches!(err, Error::DegenerateBatch { rows: 1 }));
        assert!(batch_norm(&x, &mut state(3, 1e-5, 1), Mode::Infer, false).is_ok());
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let x = Tensor2::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
        let mut s = state(1, 1e-5, 8);
        batch_norm(&x, &mut s, Mode::Train, false).unwrap();
        assert!((s.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((s.running_var[0] - (0.9 + 0.1)).abs() < 1e-15);
        let (y, _) = batch_norm(&x, &mut s, Mode::Infer, false).unwrap();
        assert!((y.get(0, 0) - 0.8 / (1.0f64 + 1e-5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(BnState::new(2, 0.0, 1e-5, 1).is_err());
        assert!(BnState::new(2, 1.5, 1e-5, 1).is_err());
        assert!(BnState::new(2, 0.5, 1e-5, 0).is_err());
    }
}
