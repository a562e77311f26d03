//! Overlapping groups through column duplication.
//!
//! Every group gets its own copy of its columns, which turns an overlapping
//! structure into a partition that the ordinary solver handles. A feature's
//! coefficient is the sum of its copies. Shards vote per feature, and the
//! security check then drops features not covered by a fully selected group.

use std::ops::Range;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dc::{
    local_select, majority_vote, run_stage2, shard_split, DcConfig, DcResult, DcTimings,
    ShardVote,
};
use crate::error::{Error, Flag, Result};
use crate::model::{
    validate_structure, GroupCoefficients, GroupStructure, GroupedDesign, SupportMode,
    SupportPattern,
};
use crate::parallel::map_indexed;

/// How shard-level fits are turned into one feature support.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapStrategy {
    /// Vote per feature, then keep features covered by a fully voted group.
    #[default]
    SelectAndDiscard,
    /// Vote per group and take the union of the voted groups.
    SelectInGroups,
}

impl std::str::FromStr for OverlapStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "select-and-discard" => Ok(OverlapStrategy::SelectAndDiscard),
            "select-in-groups" => Ok(OverlapStrategy::SelectInGroups),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for OverlapStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OverlapStrategy::SelectAndDiscard => "select-and-discard",
            OverlapStrategy::SelectInGroups => "select-in-groups",
        })
    }
}

/// Correspondence between duplicated columns and original features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicationMap {
    pub p: usize,
    pub expanded_p: usize,
    /// Original feature of each expanded column.
    pub column_origin: Vec<usize>,
    /// Expanded columns owned by each group, in group order.
    pub group_blocks: Vec<Range<usize>>,
}

impl DuplicationMap {
    pub fn new(structure: &GroupStructure) -> Self {
        let mut column_origin = Vec::new();
        let mut group_blocks = Vec::with_capacity(structure.num_groups());
        for g in structure.groups() {
            let start = column_origin.len();
            column_origin.extend_from_slice(g);
            group_blocks.push(start..column_origin.len());
        }
        DuplicationMap {
            p: structure.p(),
            expanded_p: column_origin.len(),
            column_origin,
            group_blocks,
        }
    }

    /// Non-overlapping structure on the expanded columns, same weights.
    pub fn expanded_structure(&self, weights: &[f64]) -> Result<GroupStructure> {
        let groups: Vec<Vec<usize>> = self.group_blocks.iter().map(|r| r.clone().collect()).collect();
        validate_structure(groups, self.expanded_p, false)?.with_weights(weights.to_vec())
    }

    /// Embeds per-group coefficient blocks into the expanded space.
    pub fn expand_coefficients(&self, coefs: &GroupCoefficients, groups: &[usize]) -> GroupCoefficients {
        let mut out = GroupCoefficients::zeros(self.expanded_p);
        out.intercept = coefs.intercept;
        for &g in groups {
            for e in self.group_blocks[g].clone() {
                out.beta[e] = coefs.beta[self.column_origin[e]];
            }
        }
        out
    }
}

/// Builds the duplicated design: block `j` holds copies of group `j`'s columns.
pub fn expand_duplicates(design: &GroupedDesign) -> Result<(GroupedDesign, DuplicationMap)> {
    let structure = design.structure();
    let map = DuplicationMap::new(structure);
    let n = design.n();
    let mut x = DMatrix::zeros(n, map.expanded_p);
    for (e, &j) in map.column_origin.iter().enumerate() {
        x.column_mut(e).copy_from_slice(design.column(j));
    }
    let expanded = GroupedDesign::new(
        x,
        design.y().clone(),
        map.expanded_structure(structure.weights())?,
    )?;
    Ok((expanded, map))
}

/// Sums duplicated coefficients back onto their original features.
pub fn collapse_duplicates(expanded: &GroupCoefficients, map: &DuplicationMap) -> Result<GroupCoefficients> {
    if expanded.len() != map.expanded_p {
        return Err(Error::DimensionMismatch {
            expected: map.expanded_p,
            got: expanded.len(),
        });
    }
    let mut out = GroupCoefficients::zeros(map.p);
    out.intercept = expanded.intercept;
    for (b, &j) in expanded.beta.iter().zip(&map.column_origin) {
        out.beta[j] += b;
    }
    Ok(out)
}

/// Feature `f` gets a vote from a shard when its collapsed coefficient is
/// nonzero; it is selected when at least `m/2` shards vote for it.
pub fn feature_vote(
    shard_betas: &[GroupCoefficients],
    map: &DuplicationMap,
    m: usize,
) -> Result<crate::dc::MajorityVote> {
    let votes = shard_betas
        .iter()
        .map(|b| Ok(collapse_duplicates(b, map)?.feature_support()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = majority_vote(&votes, m, map.p);
    out.support.mode = SupportMode::Feature;
    Ok(out)
}

/// Keeps feature `f` iff some group containing `f` lies entirely inside the
/// input set. The output is a union of whole groups.
pub fn security_check(features: &SupportPattern, structure: &GroupStructure) -> SupportPattern {
    let mut inside = vec![false; structure.p()];
    for &f in &features.selected {
        if f < inside.len() {
            inside[f] = true;
        }
    }
    let mut keep = vec![false; structure.p()];
    for g in structure.groups() {
        if g.iter().all(|&f| inside[f]) {
            for &f in g {
                keep[f] = true;
            }
        }
    }
    SupportPattern::features(crate::model::mask_to_indices(&keep))
}

/// Turns a shard's expanded-space fit into the vote it casts.
fn shard_ballot(
    vote: &ShardVote,
    map: &DuplicationMap,
    strategy: OverlapStrategy,
) -> Result<SupportPattern> {
    if vote.failed {
        return Ok(SupportPattern::empty(match strategy {
            OverlapStrategy::SelectAndDiscard => SupportMode::Feature,
            OverlapStrategy::SelectInGroups => SupportMode::Group,
        }));
    }
    Ok(match strategy {
        OverlapStrategy::SelectAndDiscard => collapse_duplicates(&vote.local_beta, map)?.feature_support(),
        OverlapStrategy::SelectInGroups => vote.support.clone(),
    })
}

/// Two-stage estimator for (possibly) overlapping groups.
///
/// Each shard fits the duplicated design, standardized per expanded column.
/// Stage two refits on the selected original features.
pub fn run_dc_oglasso(design: &GroupedDesign, m: usize, config: &DcConfig, seed: u64) -> Result<DcResult> {
    let mut out = run_dc_oglasso_strategies(design, m, config, seed, &[config.strategy])?;
    Ok(out.remove(0))
}

/// Runs stage one once and finishes it with each strategy in turn. Element
/// `i` of the output equals `run_dc_oglasso` with `strategies[i]`, except
/// that `elapsed_s` covers the shared stage one plus that strategy's
/// aggregation and refit.
pub fn run_dc_oglasso_strategies(
    design: &GroupedDesign,
    m: usize,
    config: &DcConfig,
    seed: u64,
    strategies: &[OverlapStrategy],
) -> Result<Vec<DcResult>> {
    let started = Instant::now();
    config.solver.validate()?;
    let structure = design.structure();
    let (expanded, map) = expand_duplicates(design)?;
    let (_, exp_shards) = shard_split(&expanded, m, seed, config.min_shard_size)?;
    let (_, raw_shards) = shard_split(design, m, seed, config.min_shard_size)?;

    let votes = map_indexed(&exp_shards, config.parallelism, |k, shard| {
        let t = Instant::now();
        let prepared = config.prepare(shard);
        let mut vote = local_select(k, &prepared, &config.solver);
        vote.timing_s = t.elapsed().as_secs_f64();
        vote
    });
    if votes.iter().all(|v| v.failed) {
        return Err(Error::AllShardsFailed(m));
    }
    let failure_flags: Vec<Flag> = votes
        .iter()
        .filter(|v| v.failed)
        .flat_map(|v| v.flags.iter().cloned())
        .collect();
    let stage1_max_s = votes.iter().map(|v| v.timing_s).fold(0.0, f64::max);
    let stage1_sum_s = votes.iter().map(|v| v.timing_s).sum();
    let prepared = map_indexed(&raw_shards, config.parallelism, |_, shard| config.prepare(shard));
    let stage1_done = started.elapsed().as_secs_f64();

    strategies
        .iter()
        .map(|&strategy| {
            let t_vote = Instant::now();
            let ballots = votes
                .iter()
                .map(|v| shard_ballot(v, &map, strategy))
                .collect::<Result<Vec<_>>>()?;
            let (support, counts) = match strategy {
                OverlapStrategy::SelectAndDiscard => {
                    let vote = majority_vote(&ballots, m, structure.p());
                    let mut pre = vote.support;
                    pre.mode = SupportMode::Feature;
                    (security_check(&pre, structure), vote.counts)
                }
                OverlapStrategy::SelectInGroups => {
                    let vote = majority_vote(&ballots, m, structure.num_groups());
                    let features = structure.features_of(&vote.support.selected);
                    (SupportPattern::features(features), vote.counts)
                }
            };
            let vote_s = t_vote.elapsed().as_secs_f64();
            let mut flags = failure_flags.clone();
            if support.is_empty() {
                flags.push(Flag::EmptyModel);
            }
            let stage2 = run_stage2(&prepared, &support.selected, config.solver.loss, config.parallelism)?;
            flags.extend(stage2.flags.iter().cloned());
            let timings = DcTimings {
                stage1_max_s,
                stage1_sum_s,
                vote_s,
                stage2_max_s: stage2.max_s,
                stage2_sum_s: stage2.sum_s,
                average_s: stage2.average_s,
                simulated_parallel_s: stage1_max_s + vote_s + stage2.max_s + stage2.average_s,
                elapsed_s: stage1_done + t_vote.elapsed().as_secs_f64(),
            };
            Ok(DcResult {
                m,
                seed,
                features: support.selected.clone(),
                support,
                beta: stage2.beta,
                votes: votes.clone(),
                stage2: stage2.estimates,
                vote_counts: counts,
                timings,
                flags,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn two_group_design() -> GroupedDesign {
        let x = DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 + if i == j { 1.0 } else { 0.0 });
        let y = DVector::from_fn(6, |i, _| i as f64);
        let s = validate_structure(vec![vec![0, 1], vec![1, 2]], 3, true).unwrap();
        GroupedDesign::new(x, y, s).unwrap()
    }

    #[test]
    fn expansion_duplicates_shared_feature() {
        let (exp, map) = expand_duplicates(&two_group_design()).unwrap();
        assert_eq!(map.expanded_p, 4);
        assert_eq!(map.column_origin, vec![0, 1, 1, 2]);
        assert_eq!(map.group_blocks, vec![0..2, 2..4]);
        assert!(!exp.structure().is_overlapping());
        assert_eq!(exp.column(1), exp.column(2));
    }

    #[test]
    fn partition_expansion_is_permutation() {
        let s = validate_structure(vec![vec![2, 0], vec![1]], 3, false).unwrap();
        let map = DuplicationMap::new(&s);
        assert_eq!(map.expanded_p, 3);
        let mut o = map.column_origin.clone();
        o.sort_unstable();
        assert_eq!(o, vec![0, 1, 2]);
    }

    #[test]
    fn collapse_adds_copies() {
        let s = validate_structure(vec![vec![0, 1], vec![1, 2]], 3, true).unwrap();
        let map = DuplicationMap::new(&s);
        let e = GroupCoefficients {
            beta: vec![1.0, 2.0, 3.0, 4.0],
            intercept: 0.5,
        };
        let c = collapse_duplicates(&e, &map).unwrap();
        assert_eq!(c.beta, vec![1.0, 5.0, 4.0]);
        assert_eq!(c.intercept, 0.5);
        let z = collapse_duplicates(&GroupCoefficients::zeros(4), &map).unwrap();
        assert!(z.beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn security_check_cases() {
        let s = validate_structure(vec![vec![0, 1], vec![1, 2]], 3, true).unwrap();
        let f = |v: &[usize]| SupportPattern::features(v.to_vec());
        assert_eq!(security_check(&f(&[0, 1]), &s).selected, vec![0, 1]);
        assert!(security_check(&f(&[0, 2]), &s).is_empty());
        assert_eq!(security_check(&f(&[0, 1, 2]), &s).selected, vec![0, 1, 2]);
    }

    #[test]
    fn feature_vote_threshold() {
        let s = validate_structure(vec![vec![0, 1], vec![1, 2]], 3, true).unwrap();
        let map = DuplicationMap::new(&s);
        let a = GroupCoefficients {
            beta: vec![1.0, 0.0, 0.0, 0.0],
            intercept: 0.0,
        };
        let b = GroupCoefficients::zeros(4);
        let v = feature_vote(&[a, b], &map, 2).unwrap();
        assert_eq!(v.support.selected, vec![0]);
        assert_eq!(v.support.mode, SupportMode::Feature);
        assert_eq!(v.counts, vec![1, 0, 0]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [OverlapStrategy::SelectAndDiscard, OverlapStrategy::SelectInGroups] {
            assert_eq!(s.to_string().parse::<OverlapStrategy>().unwrap(), s);
        }
        assert!("both".parse::<OverlapStrategy>().is_err());
    }
}
