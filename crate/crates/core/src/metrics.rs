//! Estimation and selection metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SupportPattern;

/// `(1/p) * sum (beta_hat - beta_true)^2`.
pub fn mse(beta_hat: &[f64], beta_true: &[f64]) -> Result<f64> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_true.len(),
            got: beta_hat.len(),
        });
    }
    if beta_true.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = beta_hat
        .iter()
        .zip(beta_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / beta_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub exact: bool,
    /// True indices absent from the estimate.
    pub missed: usize,
    /// Estimated indices absent from the truth.
    pub extra: usize,
}

pub fn support_metrics(estimate: &SupportPattern, truth: &SupportPattern) -> Result<SupportMetrics> {
    if estimate.mode != truth.mode {
        return Err(Error::ModeMismatch);
    }
    let missed = truth.selected.iter().filter(|i| !estimate.contains(**i)).count();
    let extra = estimate.selected.iter().filter(|i| !truth.contains(**i)).count();
    Ok(SupportMetrics {
        exact: missed == 0 && extra == 0,
        missed,
        extra,
    })
}

/// Number of exactly nonzero coefficients.
pub fn degrees_of_freedom(beta: &[f64]) -> usize {
    beta.iter().filter(|b| **b != 0.0).count()
}
