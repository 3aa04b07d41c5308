//! Euclidean projection onto the probability simplex.
//!
//! Forward pass uses the sort-and-threshold closed form: with `z` sorted in
//! descending order, the support size is the largest `k` with
//! `1 + k·z(k) > Σ_{j≤k} z(j)`, the threshold is `τ = (Σ_{j≤k} z(j) − 1) / k`
//! and `p_i = max(z_i − τ, 0)`.
//!
//! On the support `S` the Jacobian is `I − 11ᵀ/|S|`; off the support it is zero.

use super::Tensor2;

pub fn sparsemax(z: &[f64]) -> Vec<f64> {
    if z.is_empty() {
        return Vec::new();
    }
    let tau = threshold(z);
    z.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// The threshold `τ` of the projection.
pub fn threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support_sum = sorted[0];
    let mut k = 1usize;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let kk = (i + 1) as f64;
        if 1.0 + kk * v > cumsum {
            k = i + 1;
            support_sum = cumsum;
        }
    }
    (support_sum - 1.0) / k as f64
}

/// Vector-Jacobian product: `g ↦ Jᵀg` given the forward output `p`.
pub fn sparsemax_backward(p: &[f64], grad: &[f64]) -> Vec<f64> {
    let (sum, count) = p
        .iter()
        .zip(grad)
        .filter(|(&pi, _)| pi > 0.0)
        .fold((0.0, 0usize), |(s, n), (_, &g)| (s + g, n + 1));
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    p.iter()
        .zip(grad)
        .map(|(&pi, &g)| if pi > 0.0 { g - mean } else { 0.0 })
        .collect()
}

pub fn sparsemax_rows(z: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        out.row_mut(r).copy_from_slice(&sparsemax(z.row(r)));
    }
    out
}

pub fn sparsemax_rows_backward(p: &Tensor2, grad: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        out.row_mut(r)
            .copy_from_slice(&sparsemax_backward(p.row(r), grad.row(r)));
    }
    out
}
