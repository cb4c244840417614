//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic − numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares the analytic gradient returned by `objective` at `params` with
/// central differences of its value. `objective` returns `(value, gradient)`;
/// only the value is used at perturbed points.
pub fn finite_difference_check<F>(
    mut objective: F,
    params: &[f64],
    h_step: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(1e-7..=1e-4).contains(&h_step) {
        return Err(Error::Config(format!(
            "finite-difference step {h_step} outside [1e-7, 1e-4]"
        )));
    }
    let (_, analytic) = objective(params)?;
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "finite_difference_check",
            params.len(),
            analytic.len(),
        ));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h_step;
        let (up, _) = objective(&probe)?;
        probe[i] = orig - h_step;
        let (down, _) = objective(&probe)?;
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::GradCheck {
                index: i,
                detail: format!("non-finite loss evaluation ({up}, {down})"),
            });
        }
        let numeric = (up - down) / (2.0 * h_step);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if err > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
            };
        }
    }
    Ok(report)
}
