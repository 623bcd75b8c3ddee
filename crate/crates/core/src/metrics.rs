//! Classification metrics and the energy-penalized NetScore.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Energy below this many Joules is treated as this many Joules when scoring,
/// and the score is flagged as capped.
pub const NETSCORE_ENERGY_FLOOR: f64 = 1e-3;

pub const LOG_LOSS_CLIP: f64 = 1e-15;

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(
            "balanced_accuracy",
            format!("{} labels", y_true.len()),
            format!("{} predictions", y_pred.len()),
        ));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput("balanced_accuracy needs at least one label"));
    }
    let mut support = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(Error::Label { label, n_classes });
            }
        }
        support[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let (sum, present) = support
        .iter()
        .zip(&hits)
        .filter(|(&s, _)| s > 0)
        .fold((0.0, 0usize), |(acc, n), (&s, &h)| (acc + h as f64 / s as f64, n + 1));
    Ok(sum / present as f64)
}

/// Mean of `−ln(max(p[i, y_i], clip_eps))`.
pub fn log_loss(y_true: &[usize], probs: &Matrix, clip_eps: f64) -> Result<f64> {
    if y_true.len() != probs.rows() {
        return Err(Error::shape(
            "log_loss",
            format!("{} labels", y_true.len()),
            probs.shape_str(),
        ));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput("log_loss needs at least one label"));
    }
    let mut total = 0.0;
    for (i, &y) in y_true.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::Label {
                label: y,
                n_classes: probs.cols(),
            });
        }
        let row_sum: f64 = probs.row(i).iter().sum();
        if (row_sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "probability row {i} sums to {row_sum}, not 1"
            )));
        }
        total -= probs.get(i, y).max(clip_eps).ln();
    }
    Ok(total / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetScore {
    pub value: f64,
    /// Set when the energy was below [`NETSCORE_ENERGY_FLOOR`] and the floor
    /// was used instead.
    pub capped: bool,
}

/// `P / log10(E + 1)`.
pub fn netscore(performance: f64, energy_j: f64) -> Result<NetScore> {
    if !(performance >= 0.0) || !performance.is_finite() {
        return Err(Error::InvalidArgument(format!("performance must be >= 0, got {performance}")));
    }
    if !(energy_j >= 0.0) || !energy_j.is_finite() {
        return Err(Error::InvalidArgument(format!("energy must be >= 0, got {energy_j}")));
    }
    let capped = energy_j < NETSCORE_ENERGY_FLOOR;
    let e = if capped { NETSCORE_ENERGY_FLOOR } else { energy_j };
    Ok(NetScore {
        value: performance / (e + 1.0).log10(),
        capped,
    })
}

/// Arithmetic mean of per-segment scores.
pub fn netscore_t(per_segment: &[f64]) -> Result<f64> {
    if per_segment.is_empty() {
        return Err(Error::EmptyInput("NetScore-T needs at least one segment"));
    }
    Ok(per_segment.iter().sum::<f64>() / per_segment.len() as f64)
}

/// One evaluation point of a stream run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub segment: usize,
    pub balanced_accuracy: f64,
    pub log_loss: f64,
    pub energy_j: f64,
    pub netscore: f64,
    pub netscore_capped: bool,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_flops: u64,
    pub inference_flops: u64,
    pub buffer_fill: usize,
    pub epoch_losses: Vec<f64>,
    /// Measured, so excluded from reproducible serializations.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SegmentResult {
    pub fn total_flops(&self) -> u64 {
        self.train_flops + self.inference_flops
    }
}

/// NetScore-T of a run.
pub fn stream_netscore(results: &[SegmentResult]) -> Result<f64> {
    let ns: Vec<f64> = results.iter().map(|r| r.netscore).collect();
    netscore_t(&ns)
}
