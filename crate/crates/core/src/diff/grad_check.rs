//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Probe half-width, must lie in `[1e-7, 1e-3]`.
    pub step: f64,
    /// Denominator floor for the relative error `|a − n| / max(|a|, |n|, floor)`.
    pub abs_floor: f64,
    /// A coordinate is treated as sitting on a kink when the one-sided slopes
    /// differ by more than `kink_tolerance · max(|fwd|, |bwd|, abs_floor)`.
    pub kink_tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            abs_floor: 1e-4,
            kink_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error among the checked ones.
    pub worst_coordinate: Option<usize>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    /// Coordinates skipped because the loss is not differentiable there.
    pub excluded: Vec<usize>,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares `analytic` against central differences of `loss` around `point`.
pub fn grad_check<F>(
    mut loss: F,
    point: &[f64],
    analytic: &[f64],
    opts: GradCheckOptions,
) -> Result<GradReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&opts.step) {
        return Err(Error::Config(format!(
            "grad_check step must be in [1e-7, 1e-3], got {}",
            opts.step
        )));
    }
    if analytic.len() != point.len() {
        return Err(Error::dim("grad_check", point.len(), analytic.len()));
    }
    let h = opts.step;
    let mut probe = point.to_vec();
    let centre = loss(&probe)?;
    if !centre.is_finite() {
        return Err(Error::Probe { coordinate: 0 });
    }

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_coordinate: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
        excluded: Vec::new(),
    };
    for i in 0..point.len() {
        probe[i] = point[i] + h;
        let plus = loss(&probe)?;
        probe[i] = point[i] - h;
        let minus = loss(&probe)?;
        probe[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Probe { coordinate: i });
        }
        let fwd = (plus - centre) / h;
        let bwd = (centre - minus) / h;
        let scale = fwd.abs().max(bwd.abs()).max(opts.abs_floor);
        if (fwd - bwd).abs() > opts.kink_tolerance * scale {
            report.excluded.push(i);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst_coordinate.is_none() {
            report.max_rel_error = rel;
            report.worst_coordinate = Some(i);
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
    }
    Ok(report)
}
