//! Central finite-difference gradient checking.

use crate::buffer::FeatureBuffer;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{Imlp, PARAM_NAMES};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is (numerically) zero are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_rel_err: f64,
    /// `(tensor name, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(&'static str, usize, f64, f64)>,
}

/// `|a − n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the analytic gradient of every parameter coordinate against
/// `(L(θ + h) − L(θ − h)) / 2h`.
pub fn check_model(
    model: &Imlp,
    x: &Matrix,
    buffer: &FeatureBuffer,
    labels: &[usize],
    step: f64,
) -> Result<GradCheckReport> {
    let trace = model.forward(x, buffer)?;
    let (_, grads) = model.loss_and_backward(&trace, labels)?;

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        coordinates: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for t in 0..PARAM_NAMES.len() {
        let n = model.params.tensors()[t].as_slice().len();
        for i in 0..n {
            let original = model.params.tensors()[t].as_slice()[i];
            probe.params.tensors_mut()[t].as_mut_slice()[i] = original + step;
            let plus = probe.loss(x, buffer, labels)?;
            probe.params.tensors_mut()[t].as_mut_slice()[i] = original - step;
            let minus = probe.loss(x, buffer, labels)?;
            probe.params.tensors_mut()[t].as_mut_slice()[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grads.tensors()[t].as_slice()[i];
            let err = relative_error(analytic, numeric);
            report.coordinates += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((PARAM_NAMES[t], i, analytic, numeric));
            }
        }
    }
    Ok(report)
}
