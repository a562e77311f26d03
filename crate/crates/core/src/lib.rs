//! Group-Lasso with a two-stage divide-and-conquer estimator.
//!
//! The data are split into `m` shards. Each shard fits a group-Lasso path
//! with a groupwise majorization descent solver and picks one model by BIC;
//! the groups chosen by at least half of the shards form the final support.
//! Every shard then refits an unpenalized model on that support and the
//! refits are averaged.
//!
//! Modules:
//! - [`model`]: grouped designs, coefficient vectors, supports, standardization
//! - [`solver`]: path solver, KKT certificate, BIC selection, refit
//! - [`dc`]: sharding, majority vote, averaging
//! - [`overlap`]: overlapping groups via column duplication
//! - [`simgen`]: seeded synthetic scenarios
//! - [`metrics`] and [`bench`]: evaluation and the benchmark harness
//! - [`io`]: dataset and result file formats
//! - [`check`]: re-verification of a saved fit

pub mod bench;
pub mod check;
pub mod dc;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod overlap;
pub mod parallel;
pub mod simgen;
pub mod solver;

pub use dc::{run_dc_glasso, DcConfig, DcResult};
pub use error::{Error, Flag, Result};
pub use model::{
    validate_structure, GroupCoefficients, GroupStructure, GroupedDesign, Standardize,
    SupportMode, SupportPattern,
};
pub use overlap::{run_dc_oglasso, run_dc_oglasso_strategies, OverlapStrategy};
pub use parallel::Parallelism;
pub use solver::{Loss, PathFit, SolverConfig, WeightsMode};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
