//! `dcglasso`: simulate data, fit the divide-and-conquer group-Lasso,
//! run benchmark grids and re-check saved fits.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 invalid input,
//! 3 every shard failed. `DCGLASSO_THREADS` sets the worker-pool size.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcglasso::bench::{run_benchmark, vote_consistency_mc, write_rows, write_vote_rates, BenchGrid};
use dcglasso::check::check_result;
use dcglasso::dc::ShardPlan;
use dcglasso::io::{load_dataset, save_dataset, DatasetMeta, ResultFile};
use dcglasso::simgen::{gen_overlap_scenario, gen_scenario, ScenarioSpec};
use dcglasso::{run_dc_glasso, run_dc_oglasso, Error, Loss};

use crate::config::{resolve, FitFile, FitFlags};

const THREADS_VAR: &str = "DCGLASSO_THREADS";

#[derive(Parser)]
#[command(name = "dcglasso", version, about = "Divide-and-conquer group-Lasso")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus companion JSON)
    Simulate {
        /// Preset scenario 1-6
        #[arg(long, conflicts_with = "overlap", required_unless_present = "overlap")]
        scenario: Option<u8>,
        /// Chain of half-overlapping groups instead of a preset
        #[arg(long, requires = "p")]
        overlap: bool,
        /// Feature count for --overlap
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; the JSON is written next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a dataset and write a result JSON
    Fit {
        data: PathBuf,
        #[command(flatten)]
        flags: FitFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark grid described by a TOML file
    Bench {
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where vote simulation rates go (default: <out stem>.vote.csv)
        #[arg(long)]
        vote_out: Option<PathBuf>,
    },
    /// Re-verify a saved fit against its data
    Check { data: PathBuf, result: PathBuf },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("check failed")]
    CheckFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::CheckFailed => 1,
            CliError::Core(e) => match e {
                Error::AllShardsFailed(_) => 3,
                Error::NonFinite(_) | Error::AllPathsFailed => 1,
                _ => 2,
            },
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot size the worker pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn simulate(scenario: Option<u8>, p: Option<usize>, n: usize, seed: u64, out: &Path) -> CliResult {
    let (design, truth, name) = match (scenario, p) {
        (Some(id), _) => {
            let (d, t) = gen_scenario(&ScenarioSpec::preset(id, n, seed)?)?;
            (d, t, id.to_string())
        }
        (None, Some(p)) => {
            let (d, t) = gen_overlap_scenario(p, n, seed)?;
            (d, t, "overlap".to_string())
        }
        (None, None) => return Err(CliError::Input("pass --scenario or --overlap --p".into())),
    };
    let meta = DatasetMeta {
        beta_true: Some(truth.beta_true.clone()),
        active_groups: Some(truth.active_groups.clone()),
        seed: Some(seed),
        scenario: Some(name),
        ..DatasetMeta::for_design(&design)
    };
    save_dataset(out, &design, &meta)?;
    println!(
        "wrote {} ({} x {}, {} groups, {} active)",
        out.display(),
        design.n(),
        design.p(),
        design.structure().num_groups(),
        truth.active_groups.len()
    );
    Ok(())
}

fn read_fit_file(path: Option<&Path>) -> CliResult<FitFile> {
    let Some(path) = path else {
        return Ok(FitFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn fit(data: &Path, flags: &FitFlags, out: &Path) -> CliResult {
    let file = read_fit_file(flags.config.as_deref())?;
    let settings = resolve(&file, flags);
    settings.dc.solver.validate()?;
    if settings.m == 0 {
        return Err(CliError::Input("--m must be at least 1".into()));
    }
    let (design, _) = load_dataset(data)?;
    if settings.dc.solver.loss == Loss::Logistic && design.y().iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(CliError::Input("logistic loss needs a 0/1 response".into()));
    }
    let result = if design.structure().is_overlapping() {
        run_dc_oglasso(&design, settings.m, &settings.dc, settings.seed)?
    } else {
        run_dc_glasso(&design, settings.m, &settings.dc, settings.seed)?
    };
    let plan = ShardPlan::new(design.n(), settings.m, settings.seed)?;
    let rows: Vec<usize> = (0..settings.m).map(|k| plan.shard_size(k)).collect();
    let file = ResultFile::from_run(&result, settings, design.structure(), &rows);
    file.save(out)?;
    println!(
        "support: {} groups, {} features; {} of {} shards failed; flags: {}",
        file.support.groups.len(),
        file.support.features.len(),
        file.shards.iter().filter(|s| s.failed).count(),
        file.shards.len(),
        file.flags.len()
    );
    Ok(())
}

fn default_vote_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.vote.csv"))
}

fn bench(grid_path: &Path, out: &Path, vote_out: Option<&Path>) -> CliResult {
    let text = fs::read_to_string(grid_path).map_err(|e| CliError::Input(format!("{}: {e}", grid_path.display())))?;
    let grid: BenchGrid =
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", grid_path.display())))?;
    grid.validate()?;
    let rows = run_benchmark(&grid)?;
    write_rows(&rows, fs::File::create(out).map_err(Error::from)?)?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    println!("wrote {} rows to {} ({failed} failed runs)", rows.len(), out.display());
    if let Some(mc) = &grid.vote_mc {
        let rates = vote_consistency_mc(mc.p_success, &mc.m, mc.reps, grid.seed)?;
        let path = vote_out.map(Path::to_path_buf).unwrap_or_else(|| default_vote_path(out));
        write_vote_rates(&rates, fs::File::create(&path).map_err(Error::from)?)?;
        for r in &rates {
            println!("m={:<4} rate={:.4} bound={:.4}", r.m, r.rate, r.bound);
        }
        println!("wrote vote rates to {}", path.display());
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"))
}

fn check(data: &Path, result: &Path) -> CliResult {
    let (design, _) = load_dataset(data)?;
    let saved = ResultFile::load(result)?;
    let report = check_result(&design, &saved)?;
    for s in &report.shards {
        println!(
            "shard {:>3}: kkt {:>10}  refit gradient {:>10}  {}",
            s.shard_id,
            fmt_opt(s.kkt_residual),
            fmt_opt(s.refit_gradient),
            if s.ok { "ok" } else { "FAIL" }
        );
    }
    println!(
        "average gap {:.3e}; kkt tolerance {:.1e}; {}",
        report.average_gap,
        report.kkt_tolerance,
        if report.ok { "ok" } else { "FAIL" }
    );
    if report.ok {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Simulate {
            scenario,
            overlap,
            p,
            n,
            seed,
            out,
        } => simulate(scenario, if overlap { p } else { None }, n, seed, &out),
        Command::Fit { data, flags, out } => fit(&data, &flags, &out),
        Command::Bench { grid, out, vote_out } => bench(&grid, &out, vote_out.as_deref()),
        Command::Check { data, result } => check(&data, &result),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
