//! `fit` settings: defaults, then the TOML config file, then flags.

use std::path::PathBuf;

use clap::Args;
use dcglasso::io::FitSettings;
use dcglasso::{DcConfig, Loss, OverlapStrategy, Parallelism, Standardize, WeightsMode};
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    pub loss: Option<Loss>,
    pub path_length: Option<usize>,
    pub lambda_min_ratio: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub unweighted: Option<bool>,
}

/// Shape of the file passed to `fit --config`. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
    pub strategy: Option<OverlapStrategy>,
    pub min_shard_size: Option<usize>,
    pub sequential: Option<bool>,
    #[serde(default)]
    pub solver: SolverFile,
}

#[derive(Debug, Clone, Args)]
pub struct FitFlags {
    /// Number of shards; 1 fits the full data set
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<Loss>,
    /// Number of lambdas on the path
    #[arg(long)]
    pub path_length: Option<usize>,
    /// Smallest lambda as a fraction of the largest
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    /// Largest coefficient change at convergence
    #[arg(long)]
    pub tol: Option<f64>,
    /// Sweep cap per lambda
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Give every group penalty weight 1 instead of sqrt(size)
    #[arg(long)]
    pub unweighted: bool,
    /// Center columns without scaling them
    #[arg(long)]
    pub no_standardize: bool,
    /// Vote rule for overlapping groups
    #[arg(long)]
    pub strategy: Option<OverlapStrategy>,
    /// Smallest allowed shard
    #[arg(long)]
    pub min_shard_size: Option<usize>,
    /// Run shards one after another
    #[arg(long)]
    pub sequential: bool,
    /// Seed of the row split
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with any of the settings above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    match s {
        "squared" => Ok(Loss::Squared),
        "logistic" => Ok(Loss::Logistic),
        _ => Err(format!("unknown loss {s:?} (expected squared or logistic)")),
    }
}

fn standardize_mode(on: bool) -> Option<Standardize> {
    on.then_some(Standardize::Full)
}

fn parallelism(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Rayon
    }
}

fn weights(unweighted: bool) -> WeightsMode {
    if unweighted {
        WeightsMode::Unweighted
    } else {
        WeightsMode::SqrtSize
    }
}

/// Layers the file and the flags over the defaults.
pub fn resolve(file: &FitFile, flags: &FitFlags) -> FitSettings {
    let mut dc = DcConfig::default();
    let s = &file.solver;
    if let Some(v) = s.loss {
        dc.solver.loss = v;
    }
    if let Some(v) = s.path_length {
        dc.solver.path_length = v;
    }
    if let Some(v) = s.lambda_min_ratio {
        dc.solver.lambda_min_ratio = Some(v);
    }
    if let Some(v) = s.tol {
        dc.solver.tol = v;
    }
    if let Some(v) = s.max_iter {
        dc.solver.max_iter = v;
    }
    if let Some(v) = s.unweighted {
        dc.solver.weights_mode = weights(v);
    }
    if let Some(v) = file.standardize {
        dc.standardize = standardize_mode(v);
    }
    if let Some(v) = file.strategy {
        dc.strategy = v;
    }
    if let Some(v) = file.min_shard_size {
        dc.min_shard_size = Some(v);
    }
    if let Some(v) = file.sequential {
        dc.parallelism = parallelism(v);
    }

    if let Some(v) = flags.loss {
        dc.solver.loss = v;
    }
    if let Some(v) = flags.path_length {
        dc.solver.path_length = v;
    }
    if let Some(v) = flags.lambda_min_ratio {
        dc.solver.lambda_min_ratio = Some(v);
    }
    if let Some(v) = flags.tol {
        dc.solver.tol = v;
    }
    if let Some(v) = flags.max_iter {
        dc.solver.max_iter = v;
    }
    if flags.unweighted {
        dc.solver.weights_mode = WeightsMode::Unweighted;
    }
    if flags.no_standardize {
        dc.standardize = None;
    }
    if let Some(v) = flags.strategy {
        dc.strategy = v;
    }
    if let Some(v) = flags.min_shard_size {
        dc.min_shard_size = Some(v);
    }
    if flags.sequential {
        dc.parallelism = Parallelism::Sequential;
    }
    FitSettings {
        m: flags.m.or(file.m).unwrap_or(1),
        seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        dc,
    }
}
