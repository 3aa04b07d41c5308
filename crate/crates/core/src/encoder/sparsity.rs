use crate::diff::Tensor2;

/// Mean entropy of the masks, averaged over steps and rows.
pub fn sparsity_loss(masks: &[Tensor2], epsilon: f64) -> f64 {
    let Some(first) = masks.first() else {
        return 0.0;
    };
    let denom = (masks.len() * first.rows()) as f64;
    let total: f64 = masks
        .iter()
        .flat_map(|m| m.data())
        .map(|&m| -m * (m + epsilon).ln())
        .sum();
    total / denom
}

/// Gradient of [`sparsity_loss`] with respect to one mask, scaled by `weight`.
pub(crate) fn sparsity_grad(mask: &Tensor2, n_steps: usize, epsilon: f64, weight: f64) -> Tensor2 {
    let denom = (n_steps * mask.rows()) as f64;
    mask.map(|m| -weight * ((m + epsilon).ln() + m / (m + epsilon)) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_one_hot_bounds() {
        let d = 4;
        let uniform = Tensor2::filled(3, d, 0.25);
        let l = sparsity_loss(&[uniform.clone(), uniform], 1e-15);
        assert!((l - (d as f64).ln()).abs() < 1e-9);

        let one_hot = Tensor2::from_rows(&[vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
        let l = sparsity_loss(&[one_hot], 1e-15);
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = Tensor2::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]).unwrap();
        let g = sparsity_grad(&m, 2, 1e-15, 1.0);
        let h = 1e-6;
        for idx in 0..6 {
            let mut plus = m.clone();
            plus.data_mut()[idx] += h;
            let mut minus = m.clone();
            minus.data_mut()[idx] -= h;
            let other = Tensor2::filled(2, 3, 1.0 / 3.0);
            let num = (sparsity_loss(&[plus, other.clone()], 1e-15) - sparsity_loss(&[minus, other], 1e-15)) / (2.0 * h);
            assert!((num - g.data()[idx]).abs() < 1e-7);
        }
    }
}
