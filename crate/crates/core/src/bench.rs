//! Benchmark harness: seeded synthetic runs of the full-set and
//! divide-and-conquer estimators, written as one CSV row per run.

use std::io::Write;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dc::{majority_vote, run_dc_glasso, DcConfig, DcResult};
use crate::error::{Error, Result};
use crate::metrics::{degrees_of_freedom, mse, support_metrics};
use crate::model::{GroupedDesign, SupportPattern};
use crate::overlap::{run_dc_oglasso, OverlapStrategy};
use crate::parallel::{map_range, Parallelism};
use crate::simgen::{gen_overlap_scenario, gen_scenario, GroundTruth, ScenarioSpec};
use crate::solver::SolverConfig;

pub const CSV_HEADER: [&str; 14] = [
    "scenario",
    "n",
    "m",
    "method",
    "rep",
    "seed",
    "wall_time_s",
    "elapsed_s",
    "mse",
    "df",
    "exact_recovery",
    "missed",
    "extra",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fullset,
    Dc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Fullset => "fullset",
            Method::Dc => "dc",
        })
    }
}

/// Which generator a cell draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    /// Scenarios 1 to 6.
    Preset(u8),
    /// Chain of half-overlapping groups.
    Overlap,
}

impl TryFrom<String> for Scenario {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.to_string()
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "overlap" {
            return Ok(Scenario::Overlap);
        }
        match s.parse::<u8>() {
            Ok(id @ 1..=6) => Ok(Scenario::Preset(id)),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scenario {s:?} (expected 1-6 or \"overlap\")"
            ))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Preset(id) => write!(f, "{id}"),
            Scenario::Overlap => f.write_str("overlap"),
        }
    }
}

/// One block of the grid: every `n` is crossed with every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCell {
    pub scenario: Scenario,
    pub n: Vec<usize>,
    /// Rows per shard; the shard count is `n / shard_size`.
    #[serde(default)]
    pub shard_size: Option<usize>,
    /// Fixed shard count, used when `shard_size` is absent.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Feature count for the overlap generator.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub strategy: OverlapStrategy,
    /// Overrides the grid-level repetition count.
    #[serde(default)]
    pub reps: Option<usize>,
    /// Overrides the grid-level solver settings.
    #[serde(default)]
    pub solver: Option<SolverConfig>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Fullset, Method::Dc]
}

const DEFAULT_SHARD_SIZE: usize = 1000;

impl BenchCell {
    pub fn shard_count(&self, n: usize) -> usize {
        match (self.shard_size, self.m) {
            (Some(size), _) => (n / size.max(1)).max(1),
            (None, Some(m)) => m.max(1),
            (None, None) => (n / DEFAULT_SHARD_SIZE).max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::InvalidConfig("cell has no sample sizes".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("cell has no methods".into()));
        }
        if self.shard_size == Some(0) || self.m == Some(0) {
            return Err(Error::InvalidConfig("shard size and m must be positive".into()));
        }
        if self.scenario == Scenario::Overlap && self.p.is_none() {
            return Err(Error::InvalidConfig("overlap cells need p".into()));
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteMcConfig {
    pub p_success: f64,
    pub m: Vec<usize>,
    #[serde(default = "default_mc_reps")]
    pub reps: usize,
}

fn default_mc_reps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchGrid {
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Runs repetitions concurrently; timings are then not meaningful.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, rename = "cell")]
    pub cells: Vec<BenchCell>,
    #[serde(default)]
    pub vote_mc: Option<VoteMcConfig>,
}

fn default_reps() -> usize {
    20
}

impl BenchGrid {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.cells.is_empty() && self.vote_mc.is_none() {
            return Err(Error::InvalidConfig("grid has neither cells nor vote_mc".into()));
        }
        for c in &self.cells {
            c.validate()?;
        }
        if let Some(mc) = &self.vote_mc {
            if !(mc.p_success > 0.0 && mc.p_success <= 1.0) || mc.m.is_empty() || mc.m.contains(&0) {
                return Err(Error::InvalidConfig("vote_mc needs 0 < p_success <= 1 and m >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    /// Slowest shard per stage plus aggregation.
    pub wall_time_s: f64,
    /// Actual in-process time around the fit.
    pub elapsed_s: f64,
    pub mse: f64,
    pub df: usize,
    pub exact_recovery: bool,
    pub missed: usize,
    pub extra: usize,
    pub error: String,
}

/// Mixes indices into a seed so each run draws from its own stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Draws one dataset for a cell.
pub fn generate(cell: &BenchCell, n: usize, seed: u64) -> Result<(GroupedDesign, GroundTruth)> {
    match cell.scenario {
        Scenario::Preset(id) => gen_scenario(&ScenarioSpec::preset(id, n, seed)?),
        Scenario::Overlap => gen_overlap_scenario(cell.p.unwrap_or(1000), n, seed),
    }
}

/// True support in the mode the estimator reports.
pub fn true_support(cell: &BenchCell, truth: &GroundTruth) -> SupportPattern {
    match cell.scenario {
        Scenario::Preset(_) => SupportPattern::groups(truth.active_groups.clone()),
        Scenario::Overlap => SupportPattern::features(truth.true_features()),
    }
}

/// Runs one estimator on one dataset.
pub fn fit_once(
    cell: &BenchCell,
    design: &GroupedDesign,
    m: usize,
    config: &DcConfig,
    seed: u64,
) -> Result<DcResult> {
    match cell.scenario {
        Scenario::Preset(_) => run_dc_glasso(design, m, config, seed),
        Scenario::Overlap => run_dc_oglasso(design, m, config, seed),
    }
}

fn score(
    cell: &BenchCell,
    n: usize,
    m: usize,
    method: Method,
    rep: usize,
    seed: u64,
    truth: &GroundTruth,
    outcome: Result<DcResult>,
    elapsed_s: f64,
) -> BenchRow {
    let mut row = BenchRow {
        scenario: cell.scenario.to_string(),
        n,
        m,
        method,
        rep,
        seed,
        wall_time_s: f64::NAN,
        elapsed_s,
        mse: f64::NAN,
        df: 0,
        exact_recovery: false,
        missed: 0,
        extra: 0,
        error: String::new(),
    };
    let measured = outcome.and_then(|res| {
        let sm = support_metrics(&res.support, &true_support(cell, truth))?;
        Ok((res, sm))
    });
    match measured {
        Ok((res, sm)) => {
            row.wall_time_s = res.timings.simulated_parallel_s.max(f64::MIN_POSITIVE);
            row.mse = mse(&res.beta.beta, &truth.beta_true).unwrap_or(f64::NAN);
            row.df = degrees_of_freedom(&res.beta.beta);
            row.exact_recovery = sm.exact;
            row.missed = sm.missed;
            row.extra = sm.extra;
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

/// Runs every (cell, n, rep, method) combination. A failing run becomes a
/// row with its error message and the benchmark continues.
pub fn run_benchmark(grid: &BenchGrid) -> Result<Vec<BenchRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (ci, cell) in grid.cells.iter().enumerate() {
        let solver = cell.solver.clone().unwrap_or_else(|| grid.solver.clone());
        let reps = cell.reps.unwrap_or(grid.reps);
        for &n in &cell.n {
            let mode = if grid.parallel {
                Parallelism::Rayon
            } else {
                Parallelism::Sequential
            };
            let per_rep = map_range(reps, mode, |rep| {
                let data_seed = derive_seed(grid.seed, &[ci as u64, n as u64, rep as u64]);
                let split_seed = derive_seed(data_seed, &[1]);
                let config = DcConfig {
                    solver: solver.clone(),
                    strategy: cell.strategy,
                    parallelism: Parallelism::Sequential,
                    ..DcConfig::default()
                };
                let data = generate(cell, n, data_seed);
                cell.methods
                    .iter()
                    .map(|&method| {
                        let m = match method {
                            Method::Fullset => 1,
                            Method::Dc => cell.shard_count(n),
                        };
                        match &data {
                            Ok((design, truth)) => {
                                let start = Instant::now();
                                let outcome = fit_once(cell, design, m, &config, split_seed);
                                let elapsed = start.elapsed().as_secs_f64();
                                score(cell, n, m, method, rep, data_seed, truth, outcome, elapsed)
                            }
                            Err(e) => BenchRow {
                                scenario: cell.scenario.to_string(),
                                n,
                                m,
                                method,
                                rep,
                                seed: data_seed,
                                wall_time_s: f64::NAN,
                                elapsed_s: 0.0,
                                mse: f64::NAN,
                                df: 0,
                                exact_recovery: false,
                                missed: 0,
                                extra: 0,
                                error: e.to_string(),
                            },
                        }
                    })
                    .collect::<Vec<_>>()
            });
            rows.extend(per_rep.into_iter().flatten());
        }
    }
    Ok(rows)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes rows under [`CSV_HEADER`].
pub fn write_rows<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.method.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            fmt_f64(r.wall_time_s),
            fmt_f64(r.elapsed_s),
            fmt_f64(r.mse),
            r.df.to_string(),
            r.exact_recovery.to_string(),
            r.missed.to_string(),
            r.extra.to_string(),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Exact-recovery rate of majority voting over `m` simulated shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRate {
    pub m: usize,
    pub reps: usize,
    pub rate: f64,
    /// `1 - P(1-P) / (m (P - 1/2)^2)`; may be negative for small `m`.
    pub bound: f64,
}

pub const VOTE_CSV_HEADER: [&str; 4] = ["m", "reps", "rate", "bound"];

/// Universe and true model used by the vote simulation.
const MC_GROUPS: usize = 20;
const MC_TRUE: usize = 5;

pub fn chebyshev_bound(p_success: f64, m: usize) -> f64 {
    1.0 - p_success * (1.0 - p_success) / (m as f64 * (p_success - 0.5).powi(2))
}

/// Each shard returns the true model with probability `p_success` and
/// otherwise a wrong model (the truth with one random group flipped in or
/// out). Returns the empirical rate at which the majority vote equals the
/// truth, per `m`.
pub fn vote_consistency_mc(p_success: f64, ms: &[usize], reps: usize, seed: u64) -> Result<Vec<VoteRate>> {
    if !(p_success > 0.0 && p_success <= 1.0) {
        return Err(Error::InvalidConfig("p_success must lie in (0, 1]".into()));
    }
    let truth: Vec<usize> = (0..MC_TRUE).collect();
    let universe: Vec<usize> = (0..MC_GROUPS).collect();
    let truth_pattern = SupportPattern::groups(truth.clone());
    ms.iter()
        .map(|&m| {
            if m == 0 {
                return Err(Error::InvalidConfig("m must be >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[m as u64]));
            let mut hits = 0usize;
            for _ in 0..reps {
                let votes: Vec<SupportPattern> = (0..m)
                    .map(|_| {
                        if rng.random::<f64>() < p_success {
                            truth_pattern.clone()
                        } else {
                            let flip = *universe.choose(&mut rng).expect("non-empty universe");
                            let mut wrong = truth.clone();
                            match wrong.iter().position(|&g| g == flip) {
                                Some(at) => {
                                    wrong.remove(at);
                                }
                                None => wrong.push(flip),
                            }
                            SupportPattern::groups(wrong)
                        }
                    })
                    .collect();
                if majority_vote(&votes, m, MC_GROUPS).support == truth_pattern {
                    hits += 1;
                }
            }
            Ok(VoteRate {
                m,
                reps,
                rate: hits as f64 / reps.max(1) as f64,
                bound: chebyshev_bound(p_success, m),
            })
        })
        .collect()
}

pub fn write_vote_rates<W: Write>(rates: &[VoteRate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VOTE_CSV_HEADER)?;
    for r in rates {
        w.write_record([r.m.to_string(), r.reps.to_string(), fmt_f64(r.rate), fmt_f64(r.bound)])?;
    }
    w.flush()?;
    Ok(())
}
