//! Fully connected layers and elementwise activations with analytic backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{Error, Result};

/// Weights, bias and their gradient accumulators for one fully connected layer.
///
/// `weights` is `n_in × n_out` so that `y = x · W + b`. When `has_bias` is false
/// the bias stays at zero and receives no gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub has_bias: bool,
    #[serde(skip)]
    pub grad_weights: Option<Tensor2>,
    #[serde(skip)]
    pub grad_bias: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros(n_in: usize, n_out: usize, has_bias: bool) -> Self {
        Self {
            weights: Tensor2::zeros(n_in, n_out),
            bias: vec![0.0; n_out],
            has_bias,
            grad_weights: Some(Tensor2::zeros(n_in, n_out)),
            grad_bias: vec![0.0; n_out],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(n_in: usize, n_out: usize, has_bias: bool, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_in, n_out, has_bias);
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        for w in p.weights.data_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        p
    }

    pub fn from_weights(weights: Tensor2, bias: Option<Vec<f64>>) -> Result<Self> {
        let n_out = weights.cols();
        let (bias, has_bias) = match bias {
            Some(b) if b.len() != n_out => return Err(Error::dim("ParamBlock", n_out, b.len())),
            Some(b) => (b, true),
            None => (vec![0.0; n_out], false),
        };
        Ok(Self {
            grad_weights: Some(Tensor2::zeros(weights.rows(), n_out)),
            grad_bias: vec![0.0; n_out],
            weights,
            bias,
            has_bias,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn grad_weights(&self) -> &Tensor2 {
        self.grad_weights
            .as_ref()
            .expect("gradient slots initialised by ensure_grads")
    }

    /// Allocates gradient slots after deserialization.
    pub fn ensure_grads(&mut self) {
        if self.grad_weights.is_none() {
            self.grad_weights = Some(Tensor2::zeros(self.n_in(), self.n_out()));
        }
        if self.grad_bias.len() != self.n_out() {
            self.grad_bias = vec![0.0; self.n_out()];
        }
    }

    pub fn zero_grad(&mut self) {
        self.ensure_grads();
        if let Some(g) = self.grad_weights.as_mut() {
            g.data_mut().fill(0.0);
        }
        self.grad_bias.fill(0.0);
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + if self.has_bias { self.bias.len() } else { 0 }
    }
}

/// `y = x · W + b`.
pub fn linear_forward(x: &Tensor2, p: &ParamBlock) -> Result<Tensor2> {
    if x.cols() != p.n_in() {
        return Err(Error::dim("linear_forward", p.n_in(), x.cols()));
    }
    let mut y = x.matmul(&p.weights)?;
    if p.has_bias {
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&p.bias) {
                *v += b;
            }
        }
    }
    Ok(y)
}

/// Accumulates `∂L/∂W` and `∂L/∂b` into `p` and returns `∂L/∂x`.
pub fn linear_backward(x: &Tensor2, p: &mut ParamBlock, grad_y: &Tensor2) -> Result<Tensor2> {
    grad_y.expect_shape("linear_backward", (x.rows(), p.n_out()))?;
    p.ensure_grads();
    let gw = x.t_matmul(grad_y)?;
    p.grad_weights
        .as_mut()
        .expect("allocated above")
        .add_assign(&gw)?;
    if p.has_bias {
        for r in 0..grad_y.rows() {
            for (gb, g) in p.grad_bias.iter_mut().zip(grad_y.row(r)) {
                *gb += g;
            }
        }
    }
    grad_y.matmul_t(&p.weights)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Self-gated unit `x · σ(x)`, applied elementwise.
pub fn glu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v * sigmoid(v))
}

pub fn glu_backward(x: &Tensor2, grad_y: &Tensor2) -> Result<Tensor2> {
    x.zip_map(grad_y, |v, g| {
        let s = sigmoid(v);
        g * (s + v * s * (1.0 - s))
    })
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor2, grad_y: &Tensor2) -> Result<Tensor2> {
    x.zip_map(grad_y, |v, g| if v > 0.0 { g } else { 0.0 })
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean cross-entropy of `logits` against integer `targets`, with `∂L/∂logits`.
pub fn softmax_cross_entropy(logits: &Tensor2, targets: &[usize]) -> Result<(f64, Tensor2)> {
    if targets.len() != logits.rows() {
        return Err(Error::dim("softmax_cross_entropy", logits.rows(), targets.len()));
    }
    let n = logits.rows() as f64;
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= logits.cols() {
            return Err(Error::dim("softmax_cross_entropy target", logits.cols(), t));
        }
        let row = grad.row_mut(r);
        loss -= row[t].max(f64::MIN_POSITIVE).ln();
        row[t] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok((loss / n, grad))
}
