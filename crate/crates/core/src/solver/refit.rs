//! Unpenalized refit on a fixed support.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GroupCoefficients, GroupedDesign, SupportPattern};

use super::{deviance_term, sigmoid, Loss};

const NEWTON_MAX_STEPS: usize = 50;
const NEWTON_GRAD_TOL: f64 = 1e-8;
const NEWTON_RIDGE: f64 = 1e-8;
const SEPARATION_DEVIANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RefitOutcome {
    /// Coefficients on the design's own scale.
    pub coefficients: GroupCoefficients,
    pub rank: usize,
    pub rank_deficient: bool,
    pub separable: bool,
    /// `||2 X_S^T r||_inf` at the returned estimate (intercept included for logistic).
    pub gradient_norm: f64,
}

/// Least squares (or logistic regression) restricted to the support.
///
/// Squared loss fits no intercept: the design is expected to be centered, and
/// the intercept is recovered when mapping back to the raw scale. Logistic
/// loss fits an explicit intercept.
pub fn refit(design: &GroupedDesign, support: &SupportPattern, loss: Loss) -> Result<RefitOutcome> {
    let columns = support.features_in(design.structure());
    refit_columns(design, &columns, loss)
}

pub fn refit_columns(design: &GroupedDesign, columns: &[usize], loss: Loss) -> Result<RefitOutcome> {
    let p = design.p();
    if let Some(&index) = columns.iter().find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index, p });
    }
    match loss {
        Loss::Squared => least_squares(design, columns),
        Loss::Logistic => logistic(design, columns),
    }
}

fn submatrix(design: &GroupedDesign, columns: &[usize], with_intercept: bool) -> DMatrix<f64> {
    let n = design.n();
    let offset = usize::from(with_intercept);
    let mut a = DMatrix::zeros(n, columns.len() + offset);
    if with_intercept {
        a.column_mut(0).fill(1.0);
    }
    for (k, &j) in columns.iter().enumerate() {
        a.column_mut(k + offset).copy_from_slice(design.column(j));
    }
    a
}

/// Minimum-norm least squares through the SVD.
fn svd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let (n, k) = a.shape();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * (n.max(k) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    let x = svd
        .solve(b, cutoff)
        .map_err(|e| Error::InvalidDesign(format!("least squares failed: {e}")))?;
    Ok((x, rank))
}

fn least_squares(design: &GroupedDesign, columns: &[usize]) -> Result<RefitOutcome> {
    let p = design.p();
    let mut coefficients = GroupCoefficients::zeros(p);
    if columns.is_empty() {
        let gradient_norm = 0.0;
        return Ok(RefitOutcome {
            coefficients,
            rank: 0,
            rank_deficient: false,
            separable: false,
            gradient_norm,
        });
    }
    let a = submatrix(design, columns, false);
    let (sol, rank) = svd_solve(a.clone(), design.y())?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least squares refit"));
    }
    for (k, &j) in columns.iter().enumerate() {
        coefficients.beta[j] = sol[k];
    }
    let resid = design.y() - &a * &sol;
    let grad = a.tr_mul(&resid) * 2.0;
    Ok(RefitOutcome {
        coefficients,
        rank,
        rank_deficient: rank < columns.len(),
        separable: false,
        gradient_norm: grad.amax(),
    })
}

fn logistic(design: &GroupedDesign, columns: &[usize]) -> Result<RefitOutcome> {
    let n = design.n();
    let y = design.y();
    let ybar = y.mean();
    if !(ybar > 0.0 && ybar < 1.0) {
        return Err(Error::InvalidDesign(
            "logistic loss needs both classes in the response".into(),
        ));
    }
    let a = submatrix(design, columns, true);
    let k = a.ncols();
    let mut theta = DVector::zeros(k);
    theta[0] = (ybar / (1.0 - ybar)).ln();
    let deviance = |theta: &DVector<f64>| -> f64 {
        let eta = &a * theta;
        y.iter().zip(eta.iter()).map(|(y, e)| deviance_term(*y, *e)).sum()
    };
    let mut current = deviance(&theta);
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..NEWTON_MAX_STEPS {
        let eta = &a * &theta;
        let mu: DVector<f64> = eta.map(sigmoid);
        let resid = y - &mu;
        let score = a.tr_mul(&resid);
        grad_norm = 2.0 * score.amax();
        if grad_norm <= NEWTON_GRAD_TOL {
            converged = true;
            break;
        }
        let mut weighted = a.clone();
        for i in 0..n {
            let w = mu[i] * (1.0 - mu[i]);
            weighted.row_mut(i).scale_mut(w);
        }
        let mut hess = a.tr_mul(&weighted);
        for d in 0..k {
            hess[(d, d)] += NEWTON_RIDGE;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => svd_solve(hess, &score)?.0,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &theta + &step * t;
            let dev = deviance(&trial);
            if dev.is_finite() && dev <= current {
                theta = trial;
                current = dev;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic refit"));
    }
    let mut coefficients = GroupCoefficients::zeros(design.p());
    coefficients.intercept = theta[0];
    for (idx, &j) in columns.iter().enumerate() {
        coefficients.beta[j] = theta[idx + 1];
    }
    Ok(RefitOutcome {
        coefficients,
        rank: k - 1,
        rank_deficient: false,
        // a perfect fit means the classes are separated by the support
        separable: !converged || current <= SEPARATION_DEVIANCE * n as f64,
        gradient_norm: grad_norm,
    })
}
