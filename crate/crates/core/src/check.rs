//! Re-verifies a saved fit against its data.
//!
//! The shards are rebuilt from the echoed shard count, seed and config. Each
//! stored local fit must satisfy the group-Lasso optimality conditions at its
//! lambda, each stored refit must have a vanishing gradient on the selected
//! columns, and the final estimate must equal the mean of the refits.

use serde::{Deserialize, Serialize};

use crate::dc::shard_split;
use crate::error::{Error, Result};
use crate::io::ResultFile;
use crate::model::{GroupCoefficients, GroupedDesign};
use crate::overlap::expand_duplicates;
use crate::solver::{dot, kkt_residual, GlassoProblem, Loss};

/// Floor for the local-fit tolerance; the solver's own certificate is
/// `10 * tol`.
pub const KKT_TOLERANCE: f64 = 1e-6;
/// Largest allowed `max |gradient| / n` of a refit on the standardized scale.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
/// Relative tolerance of the averaging identity.
pub const AVERAGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardCheck {
    pub shard_id: usize,
    pub kkt_residual: Option<f64>,
    pub refit_gradient: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub shards: Vec<ShardCheck>,
    /// `max_j |beta_j - mean_k beta_kj|`, intercept included.
    pub average_gap: f64,
    pub kkt_tolerance: f64,
    pub ok: bool,
}

fn refit_gradient(prepared: &GroupedDesign, raw: &GroupCoefficients, columns: &[usize], loss: Loss) -> f64 {
    let coefs = match prepared.standardization() {
        Some(rec) => rec.to_standardized(raw),
        None => raw.clone(),
    };
    let problem = GlassoProblem::new(prepared, loss, Default::default());
    let resid = problem.working_residual(&coefs);
    let mut worst = columns
        .iter()
        .map(|&j| (2.0 * dot(prepared.column(j), &resid)).abs())
        .fold(0.0, f64::max);
    if loss == Loss::Logistic {
        worst = worst.max((2.0 * resid.iter().sum::<f64>()).abs());
    }
    worst / prepared.n() as f64
}

pub fn check_result(design: &GroupedDesign, result: &ResultFile) -> Result<CheckReport> {
    let settings = &result.config;
    let config = &settings.dc;
    let p = design.p();
    if result.beta.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: result.beta.len(),
        });
    }
    if result.shards.len() != settings.m {
        return Err(Error::Format(format!(
            "result lists {} shards but m = {}",
            result.shards.len(),
            settings.m
        )));
    }
    let overlapping = design.structure().is_overlapping();
    let stage1_shards = if overlapping {
        shard_split(&expand_duplicates(design)?.0, settings.m, settings.seed, config.min_shard_size)?.1
    } else {
        shard_split(design, settings.m, settings.seed, config.min_shard_size)?.1
    };
    let raw_shards = if overlapping {
        shard_split(design, settings.m, settings.seed, config.min_shard_size)?.1
    } else {
        stage1_shards.clone()
    };
    let kkt_tolerance = KKT_TOLERANCE.max(10.0 * config.solver.tol);
    let loss = config.solver.loss;

    let mut shards = Vec::with_capacity(settings.m);
    for (rec, (s1, s2)) in result.shards.iter().zip(stage1_shards.iter().zip(&raw_shards)) {
        let mut ok = true;
        let kkt = match (rec.failed, rec.lambda) {
            (false, Some(lambda)) => {
                let prepared = config.prepare(s1);
                if rec.local_beta.len() != prepared.p() {
                    return Err(Error::DimensionMismatch {
                        expected: prepared.p(),
                        got: rec.local_beta.len(),
                    });
                }
                let local = GroupCoefficients {
                    beta: rec.local_beta.clone(),
                    intercept: rec.local_intercept,
                };
                let v = kkt_residual(&prepared, &local, lambda, &config.solver);
                ok &= v <= kkt_tolerance;
                Some(v)
            }
            _ => None,
        };
        let gradient = match &rec.refit {
            Some(refit) => {
                if refit.beta.len() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        got: refit.beta.len(),
                    });
                }
                let raw = GroupCoefficients {
                    beta: refit.beta.clone(),
                    intercept: refit.intercept,
                };
                let g = refit_gradient(&config.prepare(s2), &raw, &result.support.features, loss);
                ok &= g <= GRADIENT_TOLERANCE;
                Some(g)
            }
            None => None,
        };
        shards.push(ShardCheck {
            shard_id: rec.shard_id,
            kkt_residual: kkt,
            refit_gradient: gradient,
            ok,
        });
    }

    let refits: Vec<_> = result.shards.iter().filter_map(|s| s.refit.as_ref()).collect();
    let mut average_gap: f64 = 0.0;
    let mut scale: f64 = 1.0;
    if !refits.is_empty() {
        let k = refits.len() as f64;
        for j in 0..p {
            let mean = refits.iter().map(|r| r.beta[j]).sum::<f64>() / k;
            average_gap = average_gap.max((result.beta[j] - mean).abs());
            scale = scale.max(mean.abs());
        }
        let mean = refits.iter().map(|r| r.intercept).sum::<f64>() / k;
        average_gap = average_gap.max((result.intercept - mean).abs());
        scale = scale.max(mean.abs());
    }
    let average_ok = average_gap <= AVERAGE_TOLERANCE * scale;
    let ok = average_ok && !refits.is_empty() && shards.iter().all(|s| s.ok);
    Ok(CheckReport {
        shards,
        average_gap,
        kkt_tolerance,
        ok,
    })
}
