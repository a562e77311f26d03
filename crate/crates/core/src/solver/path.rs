use serde::{Deserialize, Serialize};

use crate::error::{Error, Flag, Result};
use crate::model::{GroupCoefficients, GroupedDesign, SupportMode, SupportPattern};

use super::{GlassoProblem, GmdSolver, Loss, SolverConfig};

/// Solutions along a descending lambda sequence.
///
/// The path stops early once a solution has at least `n` nonzero
/// coefficients, where BIC is no longer defined; `flags` then carries
/// [`Flag::PathTruncated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFit {
    pub lambdas: Vec<f64>,
    pub solutions: Vec<GroupCoefficients>,
    pub supports: Vec<SupportPattern>,
    pub objective_values: Vec<f64>,
    pub bic_scores: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub failed: Vec<bool>,
    pub n: usize,
    pub flags: Vec<Flag>,
}

impl PathFit {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// `L` log-spaced values from `lmax` down to `lmax * ratio`.
pub fn lambda_path(lmax: f64, path_length: usize, ratio: f64) -> Vec<f64> {
    if path_length <= 1 {
        return vec![lmax];
    }
    let last = (path_length - 1) as f64;
    (0..path_length)
        .map(|k| {
            if k == 0 {
                lmax
            } else {
                lmax * ratio.powf(k as f64 / last)
            }
        })
        .collect()
}

/// `n log(RSS / n) + df log n` for squared loss, `deviance + df log n` for
/// logistic loss. Infinite when `df >= n`.
pub fn bic(loss: Loss, n: usize, loss_value: f64, df: usize) -> f64 {
    if df >= n {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let fit = match loss {
        Loss::Squared => nf * (loss_value / nf).ln(),
        Loss::Logistic => loss_value,
    };
    fit + df as f64 * nf.ln()
}

/// Fits every lambda on the path in descending order with warm starts and a
/// sequential strong-rule screen.
pub fn fit_path(design: &GroupedDesign, config: &SolverConfig) -> Result<PathFit> {
    config.validate()?;
    let n = design.n();
    let problem = GlassoProblem::new(design, config.loss, config.weights_mode);
    let structure = design.structure();
    let null = problem.null_coefficients()?;
    let mut path = PathFit {
        lambdas: Vec::new(),
        solutions: Vec::new(),
        supports: Vec::new(),
        objective_values: Vec::new(),
        bic_scores: Vec::new(),
        iterations: Vec::new(),
        converged: Vec::new(),
        failed: Vec::new(),
        n,
        flags: Vec::new(),
    };
    let lmax = match problem.lambda_max() {
        Ok(v) => v,
        Err(Error::ZeroResponse) => {
            path.flags.push(Flag::ZeroResponse);
            0.0
        }
        Err(e) => return Err(e),
    };
    let null_loss = problem.loss_value(&null);
    let record_null = |path: &mut PathFit, lambda: f64| {
        path.lambdas.push(lambda);
        path.objective_values.push(null_loss);
        path.bic_scores.push(bic(config.loss, n, null_loss, 0));
        path.supports.push(SupportPattern::empty(SupportMode::Group));
        path.solutions.push(null.clone());
        path.iterations.push(0);
        path.converged.push(true);
        path.failed.push(false);
    };
    if lmax == 0.0 {
        record_null(&mut path, 0.0);
        return Ok(path);
    }
    let ratio = config.effective_min_ratio(n, design.p());
    let lambdas = lambda_path(lmax, config.path_length, ratio);
    record_null(&mut path, lambdas[0]);

    let mut solver = GmdSolver::new(&problem, config.tol, config.max_iter);
    solver.reset(null.clone())?;
    let mut grad_norms = solver.gradient_norms();
    let weights = problem.weights();
    let mut prev_lambda = lambdas[0];
    for (k, &lambda) in lambdas.iter().enumerate().skip(1) {
        let screen: Vec<bool> = grad_norms
            .iter()
            .zip(weights)
            .map(|(g, w)| *g >= w * (2.0 * lambda - prev_lambda))
            .collect();
        let warm = solver.coefficients();
        match solver.solve(lambda, &screen) {
            Ok(stats) => {
                let coefs = solver.coefficients();
                let loss_value = problem.loss_value(&coefs);
                let df = coefs.nonzero_count();
                if !stats.converged {
                    path.flags.push(Flag::NotConverged { lambda });
                }
                path.lambdas.push(lambda);
                path.objective_values
                    .push(loss_value + lambda * problem.penalty(&coefs));
                path.bic_scores.push(bic(config.loss, n, loss_value, df));
                path.supports.push(coefs.group_support(structure));
                path.solutions.push(coefs);
                path.iterations.push(stats.sweeps);
                path.converged.push(stats.converged);
                path.failed.push(false);
                if df >= n {
                    path.flags.push(Flag::PathTruncated {
                        fitted: k + 1,
                        requested: lambdas.len(),
                    });
                    break;
                }
                grad_norms = solver.gradient_norms();
            }
            Err(e) => {
                path.flags.push(Flag::FitFailed {
                    lambda,
                    reason: e.to_string(),
                });
                path.lambdas.push(lambda);
                path.objective_values.push(f64::NAN);
                path.bic_scores.push(f64::NAN);
                path.supports.push(warm.group_support(structure));
                path.solutions.push(warm.clone());
                path.iterations.push(0);
                path.converged.push(false);
                path.failed.push(true);
                solver.reset(warm)?;
                grad_norms = solver.gradient_norms();
            }
        }
        prev_lambda = lambda;
    }
    Ok(path)
}

/// Index of the BIC-minimizing solution and its group support. Ties go to
/// the larger lambda, i.e. the earlier entry.
pub fn bic_select(path: &PathFit) -> Result<(usize, SupportPattern)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &score) in path.bic_scores.iter().enumerate() {
        if path.failed[k] || score.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if score >= b => {}
            _ => best = Some((k, score)),
        }
    }
    let (k, _) = best.ok_or(Error::AllPathsFailed)?;
    Ok((k, path.supports[k].clone()))
}
