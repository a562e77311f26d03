//! Single-machine group-Lasso.
//!
//! The objective follows the unscaled form
//!
//! ```text
//! J(beta) = L(beta) + lambda * sum_i w_i ||beta_i||_2
//! ```
//!
//! where `L` is the residual sum of squares `||y - X beta||^2` for squared
//! loss (no 1/2, no 1/n) and the binomial deviance for logistic loss. Every
//! gradient and KKT quantity therefore carries a factor of 2.

mod gmd;
mod kernels;
mod path;
mod refit;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupCoefficients, GroupedDesign};

pub use gmd::{GlassoFit, GmdSolver, SolveStats};
pub use path::{bic, bic_select, fit_path, lambda_path, PathFit};
pub use refit::{refit, refit_columns, RefitOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Squared,
    Logistic,
}

/// How group penalty weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    /// Use the structure's weights (`sqrt(d_i)` unless overridden).
    #[default]
    SqrtSize,
    /// Every group has weight 1.
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub loss: Loss,
    pub path_length: usize,
    /// Smallest lambda on the path as a fraction of lambda_max. `None` picks
    /// 0.001 when n >= p and 0.05 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub max_iter: usize,
    /// Stop sweeping once no coefficient moves by more than this.
    pub tol: f64,
    pub weights_mode: WeightsMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            loss: Loss::Squared,
            path_length: 100,
            lambda_min_ratio: None,
            max_iter: 3000,
            tol: 1e-8,
            weights_mode: WeightsMode::SqrtSize,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.path_length == 0 {
            return Err(Error::InvalidConfig("path_length must be >= 1".into()));
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "lambda_min_ratio must lie in (0, 1), got {r}"
                )));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_min_ratio(&self, n: usize, p: usize) -> f64 {
        self.lambda_min_ratio
            .unwrap_or(if n >= p { 1e-3 } else { 0.05 })
    }
}

/// A design paired with a loss and effective penalty weights.
///
/// The design is expected to be centered (squared loss) or column-centered
/// (logistic loss); see [`GroupedDesign::standardize`].
#[derive(Debug)]
pub struct GlassoProblem<'a> {
    design: &'a GroupedDesign,
    loss: Loss,
    weights: Vec<f64>,
    gammas: Vec<f64>,
}

impl<'a> GlassoProblem<'a> {
    pub fn new(design: &'a GroupedDesign, loss: Loss, weights_mode: WeightsMode) -> Self {
        let structure = design.structure();
        let weights = match weights_mode {
            WeightsMode::SqrtSize => structure.weights().to_vec(),
            WeightsMode::Unweighted => vec![1.0; structure.num_groups()],
        };
        let curvature = match loss {
            Loss::Squared => 1.0,
            // deviance Hessian is 2 X^T W X with W <= 1/4
            Loss::Logistic => 0.25,
        };
        let gammas = structure
            .groups()
            .iter()
            .map(|cols| curvature * gmd::gram_lipschitz(&gmd::group_gram(design, cols), cols.len()))
            .collect();
        GlassoProblem {
            design,
            loss,
            weights,
            gammas,
        }
    }

    pub fn design(&self) -> &GroupedDesign {
        self.design
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Majorization constants: largest eigenvalue of `2 X_i^T X_i`
    /// (times 1/4 for logistic loss).
    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Linear predictor `intercept + X beta`.
    pub fn linear_predictor(&self, coefs: &GroupCoefficients) -> Vec<f64> {
        self.design.predict(coefs).as_slice().to_vec()
    }

    /// `y - fitted` (squared) or `y - mu` (logistic).
    pub fn working_residual(&self, coefs: &GroupCoefficients) -> Vec<f64> {
        let eta = self.linear_predictor(coefs);
        let y = self.design.y();
        match self.loss {
            Loss::Squared => y.iter().zip(&eta).map(|(y, e)| y - e).collect(),
            Loss::Logistic => y.iter().zip(&eta).map(|(y, e)| y - sigmoid(*e)).collect(),
        }
    }

    pub fn loss_value(&self, coefs: &GroupCoefficients) -> f64 {
        let eta = self.linear_predictor(coefs);
        let y = self.design.y();
        match self.loss {
            Loss::Squared => y.iter().zip(&eta).map(|(y, e)| (y - e) * (y - e)).sum(),
            Loss::Logistic => y.iter().zip(&eta).map(|(y, e)| deviance_term(*y, *e)).sum(),
        }
    }

    pub fn penalty(&self, coefs: &GroupCoefficients) -> f64 {
        let structure = self.design.structure();
        (0..structure.num_groups())
            .map(|g| self.weights[g] * coefs.group_norm(structure, g))
            .sum()
    }

    pub fn objective(&self, coefs: &GroupCoefficients, lambda: f64) -> f64 {
        self.loss_value(coefs) + lambda * self.penalty(coefs)
    }

    /// `2 X_i^T r` for group `i`.
    pub fn group_gradient(&self, resid: &[f64], group: usize) -> Vec<f64> {
        self.design
            .structure()
            .group(group)
            .iter()
            .map(|&j| 2.0 * dot(self.design.column(j), resid))
            .collect()
    }

    /// `||2 X_i^T r||_2` for every group.
    pub fn gradient_norms(&self, resid: &[f64]) -> Vec<f64> {
        (0..self.design.structure().num_groups())
            .map(|g| norm(&self.group_gradient(resid, g)))
            .collect()
    }

    /// Null-model starting point: zero slopes, and for logistic loss the
    /// intercept at the log-odds of the mean response.
    pub fn null_coefficients(&self) -> Result<GroupCoefficients> {
        let mut c = GroupCoefficients::zeros(self.design.p());
        if self.loss == Loss::Logistic {
            let ybar = self.design.y().mean();
            if !(ybar > 0.0 && ybar < 1.0) {
                return Err(Error::InvalidDesign(
                    "logistic loss needs both classes in the response".into(),
                ));
            }
            c.intercept = (ybar / (1.0 - ybar)).ln();
        }
        Ok(c)
    }

    /// Smallest lambda whose solution is all-zero: `max_i ||2 X_i^T r0|| / w_i`
    /// with `r0` the null-model residual.
    pub fn lambda_max(&self) -> Result<f64> {
        let null = self.null_coefficients()?;
        let resid = self.working_residual(&null);
        if resid.iter().all(|r| *r == 0.0) {
            return Err(Error::ZeroResponse);
        }
        Ok(self
            .gradient_norms(&resid)
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| g / w)
            .fold(0.0, f64::max))
    }

    /// Largest violation of the optimality conditions at `coefs`.
    ///
    /// For a nonzero group this is `||2 X_i^T r - lambda w_i beta_i/||beta_i|| ||_inf`;
    /// for a zero group it is `max(0, ||2 X_i^T r||_2 - lambda w_i)`. With logistic
    /// loss the intercept's gradient `|2 sum r|` is included.
    pub fn kkt_residual(&self, coefs: &GroupCoefficients, lambda: f64) -> f64 {
        self.kkt_with_residual(&self.working_residual(coefs), coefs, lambda)
    }

    /// [`Self::kkt_residual`] with the working residual already at hand.
    pub fn kkt_with_residual(&self, resid: &[f64], coefs: &GroupCoefficients, lambda: f64) -> f64 {
        let structure = self.design.structure();
        let mut worst: f64 = 0.0;
        for g in 0..structure.num_groups() {
            let grad = self.group_gradient(resid, g);
            let bnorm = coefs.group_norm(structure, g);
            let thr = lambda * self.weights[g];
            let v = if bnorm > 0.0 {
                structure
                    .group(g)
                    .iter()
                    .zip(&grad)
                    .map(|(&j, gr)| (gr - thr * coefs.beta[j] / bnorm).abs())
                    .fold(0.0, f64::max)
            } else {
                (norm(&grad) - thr).max(0.0)
            };
            worst = worst.max(v);
        }
        if self.loss == Loss::Logistic {
            worst = worst.max(2.0 * resid.iter().sum::<f64>().abs());
        }
        worst
    }
}

/// Largest lambda for which the fit is nonzero. See [`GlassoProblem::lambda_max`].
pub fn lambda_max(design: &GroupedDesign, config: &SolverConfig) -> Result<f64> {
    GlassoProblem::new(design, config.loss, config.weights_mode).lambda_max()
}

/// Fits group-Lasso at a single lambda by groupwise majorization descent.
pub fn fit_glasso(
    design: &GroupedDesign,
    lambda: f64,
    config: &SolverConfig,
    warm_start: Option<&GroupCoefficients>,
) -> Result<GlassoFit> {
    config.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let problem = GlassoProblem::new(design, config.loss, config.weights_mode);
    let mut solver = GmdSolver::new(&problem, config.tol, config.max_iter);
    let lmax = match problem.lambda_max() {
        Ok(v) => v,
        Err(Error::ZeroResponse) => 0.0,
        Err(e) => return Err(e),
    };
    if lambda >= lmax {
        let coefficients = problem.null_coefficients()?;
        let objective = problem.objective(&coefficients, lambda);
        return Ok(GlassoFit {
            coefficients,
            objective,
            sweeps: 0,
            converged: true,
        });
    }
    solver.reset(warm_start.cloned().unwrap_or(problem.null_coefficients()?))?;
    let norms = solver.gradient_norms();
    let screen: Vec<bool> = norms
        .iter()
        .zip(problem.weights())
        .map(|(g, w)| *g >= w * (2.0 * lambda - lmax))
        .collect();
    let stats = solver.solve(lambda, &screen)?;
    let coefficients = solver.coefficients();
    Ok(GlassoFit {
        objective: problem.objective(&coefficients, lambda),
        coefficients,
        sweeps: stats.sweeps,
        converged: stats.converged,
    })
}

/// See [`GlassoProblem::kkt_residual`].
pub fn kkt_residual(
    design: &GroupedDesign,
    coefs: &GroupCoefficients,
    lambda: f64,
    config: &SolverConfig,
) -> f64 {
    GlassoProblem::new(design, config.loss, config.weights_mode).kkt_residual(coefs, lambda)
}

pub(crate) use kernels::{axpys_sub, dot, dots};

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `-2 [y log mu + (1 - y) log(1 - mu)]` with `mu = sigmoid(eta)`.
pub(crate) fn deviance_term(y: f64, eta: f64) -> f64 {
    let softplus = eta.max(0.0) + (-eta.abs()).exp().ln_1p();
    2.0 * (softplus - y * eta)
}
