use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature {feature} belongs to groups {first} and {second} but the structure is non-overlapping")]
    OverlapInNonOverlapMode {
        feature: usize,
        first: usize,
        second: usize,
    },
    #[error("feature {0} is not covered by any group")]
    UncoveredFeature(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("group {group} lists feature {index} more than once")]
    DuplicateIndex { group: usize, index: usize },
    #[error("feature index {index} out of range (p = {p})")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("group {group} has non-positive penalty weight {weight}")]
    InvalidWeight { group: usize, weight: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("response is identically zero after centering")]
    ZeroResponse,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("every fit along the regularization path failed")]
    AllPathsFailed,
    #[error("cannot split {n} rows into {m} shards of at least {min_size} rows")]
    ShardTooSmall { n: usize, m: usize, min_size: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("support patterns have different modes")]
    ModeMismatch,
    #[error("all {0} shards failed")]
    AllShardsFailed(usize),
    #[error("column {0} is numerically zero")]
    DegenerateColumn(usize),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Non-fatal conditions recorded alongside a result.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    NotConverged { lambda: f64 },
    FitFailed { lambda: f64, reason: String },
    ZeroResponse,
    ConstantColumns { columns: Vec<usize> },
    PathTruncated { fitted: usize, requested: usize },
    RankDeficient { rank: usize, columns: usize },
    SeparableData,
    EmptyModel,
    ShardFailed { shard: usize, reason: String },
    GroupsResampled { attempts: usize },
}
