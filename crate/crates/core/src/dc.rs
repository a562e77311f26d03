//! Two-stage divide-and-conquer group-Lasso.
//!
//! 1. Split the rows into `m` random shards.
//! 2. Each shard fits a group-Lasso path and keeps its BIC-optimal model.
//! 3. A group enters the final support when at least `m/2` shards chose it.
//! 4. Each shard refits an unpenalized model on that support.
//! 5. The refits are averaged coordinate-wise.
//!
//! Shards are processed by a worker pool; results are always gathered in
//! shard order so the output is independent of scheduling.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Flag, Result};
use crate::model::{GroupCoefficients, GroupedDesign, Standardize, SupportMode, SupportPattern};
use crate::overlap::OverlapStrategy;
use crate::parallel::{map_indexed, Parallelism};
use crate::solver::{bic_select, fit_path, refit_columns, Loss, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcConfig {
    pub solver: SolverConfig,
    /// `None` fits on raw columns (still centered for squared loss).
    pub standardize: Option<Standardize>,
    /// Minimum rows per shard; defaults to twice the largest group size.
    pub min_shard_size: Option<usize>,
    pub parallelism: Parallelism,
    /// Support aggregation for overlapping structures.
    pub strategy: OverlapStrategy,
}

impl Default for DcConfig {
    fn default() -> Self {
        DcConfig {
            solver: SolverConfig::default(),
            standardize: Some(Standardize::Full),
            min_shard_size: None,
            parallelism: Parallelism::default(),
            strategy: OverlapStrategy::default(),
        }
    }
}

impl DcConfig {
    /// Applies the per-shard preprocessing.
    pub fn prepare(&self, design: &GroupedDesign) -> GroupedDesign {
        let center_response = self.solver.loss == Loss::Squared;
        design.standardize(
            self.standardize.unwrap_or(Standardize::CenterOnly),
            center_response,
        )
    }
}

/// Random partition of the rows into `m` contiguous blocks of a permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub m: usize,
    pub seed: u64,
    pub permutation: Vec<usize>,
    /// Block boundaries into `permutation`: shard `k` is `bounds[k]..bounds[k + 1]`.
    pub bounds: Vec<usize>,
}

impl ShardPlan {
    /// Seeded uniform permutation; the first `n mod m` shards get one extra row.
    pub fn new(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("shard count must be >= 1".into()));
        }
        if n < m {
            return Err(Error::ShardTooSmall { n, m, min_size: 1 });
        }
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = n / m;
        let extra = n % m;
        let mut bounds = Vec::with_capacity(m + 1);
        let mut at = 0;
        bounds.push(0);
        for k in 0..m {
            at += base + usize::from(k < extra);
            bounds.push(at);
        }
        Ok(ShardPlan {
            m,
            seed,
            permutation,
            bounds,
        })
    }

    pub fn rows(&self, k: usize) -> &[usize] {
        &self.permutation[self.bounds[k]..self.bounds[k + 1]]
    }

    pub fn shard_size(&self, k: usize) -> usize {
        self.bounds[k + 1] - self.bounds[k]
    }
}

/// Splits a design into `m` shards. Every shard must have at least
/// `min_size` rows (default `2 * max group size`).
pub fn shard_split(
    design: &GroupedDesign,
    m: usize,
    seed: u64,
    min_size: Option<usize>,
) -> Result<(ShardPlan, Vec<GroupedDesign>)> {
    let n = design.n();
    let min_size = min_size.unwrap_or(2 * design.structure().max_group_size()).max(1);
    if m == 0 {
        return Err(Error::InvalidConfig("shard count must be >= 1".into()));
    }
    if n / m < min_size {
        return Err(Error::ShardTooSmall { n, m, min_size });
    }
    let plan = ShardPlan::new(n, m, seed)?;
    let shards = (0..m).map(|k| design.select_rows(plan.rows(k))).collect();
    Ok((plan, shards))
}

/// Stage-one output of one shard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardVote {
    pub shard_id: usize,
    pub support: SupportPattern,
    /// BIC-optimal coefficients on the shard's standardized scale.
    pub local_beta: GroupCoefficients,
    pub lambda: f64,
    pub bic: f64,
    pub path_length: usize,
    pub timing_s: f64,
    pub failed: bool,
    pub flags: Vec<Flag>,
}

impl ShardVote {
    pub(crate) fn failure(shard_id: usize, p: usize, mode: SupportMode, reason: String) -> Self {
        ShardVote {
            shard_id,
            support: SupportPattern::empty(mode),
            local_beta: GroupCoefficients::zeros(p),
            lambda: f64::NAN,
            bic: f64::NAN,
            path_length: 0,
            timing_s: 0.0,
            failed: true,
            flags: vec![Flag::ShardFailed {
                shard: shard_id,
                reason,
            }],
        }
    }
}

/// Fits the path on an already prepared shard and keeps the BIC-optimal model.
/// A failure becomes an empty vote marked `failed`.
pub fn local_select(shard_id: usize, prepared: &GroupedDesign, config: &SolverConfig) -> ShardVote {
    let start = Instant::now();
    let mut vote = match fit_path(prepared, config).and_then(|path| {
        let (k, support) = bic_select(&path)?;
        Ok((path, k, support))
    }) {
        Ok((path, k, support)) => {
            let mut flags = path.flags.clone();
            if let Some(rec) = prepared.standardization() {
                if !rec.constant_columns.is_empty() {
                    flags.push(Flag::ConstantColumns {
                        columns: rec.constant_columns.clone(),
                    });
                }
            }
            ShardVote {
                shard_id,
                support,
                local_beta: path.solutions[k].clone(),
                lambda: path.lambdas[k],
                bic: path.bic_scores[k],
                path_length: path.len(),
                timing_s: 0.0,
                failed: false,
                flags,
            }
        }
        Err(e) => ShardVote::failure(shard_id, prepared.p(), SupportMode::Group, e.to_string()),
    };
    vote.timing_s = start.elapsed().as_secs_f64();
    vote
}

/// Aggregated vote: the support plus how many shards selected each index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityVote {
    pub support: SupportPattern,
    pub counts: Vec<usize>,
}

/// Selects index `i` iff at least `m/2` of the votes contain it.
///
/// `universe` is the number of groups (or features); `m` is the shard count,
/// which may exceed `votes.len()` when shards are missing.
pub fn majority_vote(votes: &[SupportPattern], m: usize, universe: usize) -> MajorityVote {
    let mode = votes.first().map_or(SupportMode::Group, |v| v.mode);
    let mut counts = vec![0usize; universe];
    for v in votes {
        for &i in &v.selected {
            if i < universe {
                counts[i] += 1;
            }
        }
    }
    let selected = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0 && 2 * c >= m)
        .map(|(i, _)| i)
        .collect();
    MajorityVote {
        support: SupportPattern::new(mode, selected),
        counts,
    }
}

/// Stage-two output of one shard, on the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Estimate {
    pub shard_id: usize,
    pub coefficients: GroupCoefficients,
    pub rank: usize,
    pub rank_deficient: bool,
    pub separable: bool,
    /// `||2 X_S^T r||_inf / n` on the prepared shard.
    pub scaled_gradient: f64,
    pub timing_s: f64,
}

/// Refits on the supported columns of a prepared shard and maps the result
/// back to the raw scale.
pub fn stage2_local(
    shard_id: usize,
    prepared: &GroupedDesign,
    columns: &[usize],
    loss: Loss,
) -> Result<Stage2Estimate> {
    let start = Instant::now();
    let out = refit_columns(prepared, columns, loss)?;
    let coefficients = match prepared.standardization() {
        Some(rec) => rec.to_original(&out.coefficients),
        None => out.coefficients,
    };
    Ok(Stage2Estimate {
        shard_id,
        coefficients,
        rank: out.rank,
        rank_deficient: out.rank_deficient,
        separable: out.separable,
        scaled_gradient: out.gradient_norm / prepared.n() as f64,
        timing_s: start.elapsed().as_secs_f64(),
    })
}

/// Coordinate-wise mean; intercepts are averaged too.
pub fn average_estimates(estimates: &[GroupCoefficients]) -> Result<GroupCoefficients> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidConfig("no estimates to average".into()))?;
    let p = first.len();
    let mut sum = GroupCoefficients::zeros(p);
    for e in estimates {
        if e.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: e.len(),
            });
        }
        for (s, b) in sum.beta.iter_mut().zip(&e.beta) {
            *s += b;
        }
        sum.intercept += e.intercept;
    }
    let m = estimates.len() as f64;
    sum.beta.iter_mut().for_each(|b| *b /= m);
    sum.intercept /= m;
    Ok(sum)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DcTimings {
    pub stage1_max_s: f64,
    pub stage1_sum_s: f64,
    pub vote_s: f64,
    pub stage2_max_s: f64,
    pub stage2_sum_s: f64,
    pub average_s: f64,
    /// Slowest shard per stage plus both aggregation steps: the wall time
    /// with one machine per shard.
    pub simulated_parallel_s: f64,
    /// Actual in-process wall time, including the split.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcResult {
    pub m: usize,
    pub seed: u64,
    pub support: SupportPattern,
    /// Final estimate on the raw scale, zero outside the support.
    pub beta: GroupCoefficients,
    pub votes: Vec<ShardVote>,
    pub stage2: Vec<Stage2Estimate>,
    pub vote_counts: Vec<usize>,
    /// Features in the final support (equal to `support` in feature mode).
    pub features: Vec<usize>,
    pub timings: DcTimings,
    pub flags: Vec<Flag>,
}

pub(crate) struct Stage2Outcome {
    pub estimates: Vec<Stage2Estimate>,
    pub beta: GroupCoefficients,
    pub max_s: f64,
    pub sum_s: f64,
    pub average_s: f64,
    pub flags: Vec<Flag>,
}

pub(crate) fn run_stage2(
    prepared: &[GroupedDesign],
    columns: &[usize],
    loss: Loss,
    parallelism: Parallelism,
) -> Result<Stage2Outcome> {
    let results = map_indexed(prepared, parallelism, |k, shard| {
        stage2_local(k, shard, columns, loss)
    });
    let mut estimates = Vec::with_capacity(results.len());
    let mut flags = Vec::new();
    for (shard, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => estimates.push(e),
            Err(e) => flags.push(Flag::ShardFailed {
                shard,
                reason: format!("refit: {e}"),
            }),
        }
    }
    if estimates.is_empty() {
        return Err(Error::AllShardsFailed(prepared.len()));
    }
    if let Some(rank) = estimates.iter().filter(|e| e.rank_deficient).map(|e| e.rank).min() {
        flags.push(Flag::RankDeficient {
            rank,
            columns: columns.len(),
        });
    }
    if estimates.iter().any(|e| e.separable) {
        flags.push(Flag::SeparableData);
    }
    let start = Instant::now();
    let coefs: Vec<GroupCoefficients> = estimates.iter().map(|e| e.coefficients.clone()).collect();
    let mut beta = average_estimates(&coefs)?;
    let mut keep = vec![false; beta.len()];
    for &j in columns {
        keep[j] = true;
    }
    for (b, k) in beta.beta.iter_mut().zip(&keep) {
        if !k {
            *b = 0.0;
        }
    }
    let average_s = start.elapsed().as_secs_f64();
    Ok(Stage2Outcome {
        max_s: estimates.iter().map(|e| e.timing_s).fold(0.0, f64::max),
        sum_s: estimates.iter().map(|e| e.timing_s).sum(),
        estimates,
        beta,
        average_s,
        flags,
    })
}

/// Runs the full two-stage estimator on a non-overlapping structure.
pub fn run_dc_glasso(design: &GroupedDesign, m: usize, config: &DcConfig, seed: u64) -> Result<DcResult> {
    let started = Instant::now();
    config.solver.validate()?;
    let structure = design.structure();
    if structure.is_overlapping() {
        return Err(Error::InvalidConfig(
            "overlapping structure: use run_dc_oglasso".into(),
        ));
    }
    let (_plan, shards) = shard_split(design, m, seed, config.min_shard_size)?;
    let q = structure.num_groups();

    let stage1 = map_indexed(&shards, config.parallelism, |k, shard| {
        let t = Instant::now();
        let prepared = config.prepare(shard);
        let mut vote = local_select(k, &prepared, &config.solver);
        vote.timing_s = t.elapsed().as_secs_f64();
        (prepared, vote)
    });
    let (prepared, votes): (Vec<_>, Vec<_>) = stage1.into_iter().unzip();
    let mut flags: Vec<Flag> = votes
        .iter()
        .filter(|v| v.failed)
        .flat_map(|v| v.flags.iter().cloned())
        .collect();
    if votes.iter().all(|v| v.failed) {
        return Err(Error::AllShardsFailed(m));
    }

    let t_vote = Instant::now();
    let supports: Vec<SupportPattern> = votes.iter().map(|v| v.support.clone()).collect();
    let vote = majority_vote(&supports, m, q);
    let columns = structure.features_of(&vote.support.selected);
    let vote_s = t_vote.elapsed().as_secs_f64();
    if vote.support.is_empty() {
        flags.push(Flag::EmptyModel);
    }

    let stage2 = run_stage2(&prepared, &columns, config.solver.loss, config.parallelism)?;
    flags.extend(stage2.flags.iter().cloned());

    let stage1_max_s = votes.iter().map(|v| v.timing_s).fold(0.0, f64::max);
    let stage1_sum_s = votes.iter().map(|v| v.timing_s).sum();
    let timings = DcTimings {
        stage1_max_s,
        stage1_sum_s,
        vote_s,
        stage2_max_s: stage2.max_s,
        stage2_sum_s: stage2.sum_s,
        average_s: stage2.average_s,
        simulated_parallel_s: stage1_max_s + vote_s + stage2.max_s + stage2.average_s,
        elapsed_s: started.elapsed().as_secs_f64(),
    };
    Ok(DcResult {
        m,
        seed,
        support: vote.support,
        beta: stage2.beta,
        votes,
        stage2: stage2.estimates,
        vote_counts: vote.counts,
        features: columns,
        timings,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_balanced_and_disjoint() {
        let plan = ShardPlan::new(10, 2, 1).unwrap();
        assert_eq!(plan.shard_size(0), 5);
        assert_eq!(plan.shard_size(1), 5);
        let mut all: Vec<usize> = plan.rows(0).iter().chain(plan.rows(1)).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let uneven = ShardPlan::new(11, 3, 1).unwrap();
        let sizes: Vec<usize> = (0..3).map(|k| uneven.shard_size(k)).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        assert_eq!(ShardPlan::new(11, 3, 1).unwrap(), uneven);
        assert_ne!(ShardPlan::new(11, 3, 2).unwrap().permutation, uneven.permutation);
    }

    #[test]
    fn vote_threshold_is_half() {
        let v = |s: &[usize]| SupportPattern::groups(s.to_vec());
        // m = 4: two votes suffice
        let r = majority_vote(&[v(&[0]), v(&[0]), v(&[]), v(&[])], 4, 2);
        assert_eq!(r.support.selected, vec![0]);
        // m = 3: one vote does not
        let r = majority_vote(&[v(&[1]), v(&[]), v(&[])], 3, 2);
        assert!(r.support.is_empty());
        // unanimity
        let r = majority_vote(&[v(&[1]), v(&[1]), v(&[1]), v(&[1]), v(&[1])], 5, 2);
        assert_eq!(r.support.selected, vec![1]);
        assert_eq!(r.counts, vec![0, 5]);
    }

    #[test]
    fn average_small_cases() {
        let a = GroupCoefficients {
            beta: vec![1.0, 0.0],
            intercept: 2.0,
        };
        let b = GroupCoefficients {
            beta: vec![0.0, 1.0],
            intercept: 0.0,
        };
        let avg = average_estimates(&[a.clone(), b]).unwrap();
        assert_eq!(avg.beta, vec![0.5, 0.5]);
        assert_eq!(avg.intercept, 1.0);
        assert_eq!(average_estimates(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert!(matches!(
            average_estimates(&[a, GroupCoefficients::zeros(3)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
