//! File formats.
//!
//! A dataset is a CSV file with header `y,x0,...,x{p-1}` plus a companion
//! JSON file (same path, `.json` extension) holding the group structure and
//! optional ground truth. Numbers are written with 17 significant digits so
//! every value reads back bit-exactly.
//!
//! A fit is saved as a [`ResultFile`] JSON document. All wall-clock
//! measurements live under the `timings` key, so two runs with the same seed
//! differ only there.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dc::{DcConfig, DcResult, DcTimings};
use crate::error::{Error, Flag, Result};
use crate::model::{validate_structure, GroupStructure, GroupedDesign, SupportMode, SupportPattern};

pub const TOOL_NAME: &str = "dcglasso";

/// Contents of the companion JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub groups: Vec<Vec<usize>>,
    pub overlapping: bool,
    /// Penalty weights; absent means `sqrt(group size)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_true: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_groups: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl DatasetMeta {
    /// Structure-only metadata for a design.
    pub fn for_design(design: &GroupedDesign) -> Self {
        let s = design.structure();
        let default_weights = s
            .groups()
            .iter()
            .zip(s.weights())
            .all(|(g, w)| *w == (g.len() as f64).sqrt());
        DatasetMeta {
            groups: s.groups().to_vec(),
            overlapping: s.is_overlapping(),
            weights: (!default_weights).then(|| s.weights().to_vec()),
            beta_true: None,
            active_groups: None,
            seed: None,
            scenario: None,
        }
    }

    pub fn structure(&self, p: usize) -> Result<GroupStructure> {
        let s = validate_structure(self.groups.clone(), p, self.overlapping)?;
        match &self.weights {
            Some(w) => s.with_weights(w.clone()),
            None => Ok(s),
        }
    }
}

/// `data.csv` -> `data.json`.
pub fn companion_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}, column {col}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("row {row}, column {col}: non-finite value {field:?}")));
    }
    Ok(v)
}

pub fn write_dataset_csv<W: Write>(design: &GroupedDesign, out: W) -> Result<()> {
    let p = design.p();
    let mut w = csv::Writer::from_writer(out);
    let mut header = Vec::with_capacity(p + 1);
    header.push("y".to_string());
    header.extend((0..p).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let (x, y) = (design.x(), design.y());
    let mut record = Vec::with_capacity(p + 1);
    for i in 0..design.n() {
        record.clear();
        record.push(format_f64(y[i]));
        record.extend((0..p).map(|j| format_f64(x[(i, j)])));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `y` and the feature matrix; rejects a misnamed header, ragged rows
/// and non-finite values.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("y") {
        return Err(Error::Format("first column must be named \"y\"".into()));
    }
    let p = header.len() - 1;
    if p == 0 {
        return Err(Error::Format("no feature columns".into()));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("x{j}") {
            return Err(Error::Format(format!("column {} must be named x{j}, found {name:?}", j + 1)));
        }
    }
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != p + 1 {
            return Err(Error::Format(format!("row {i} has {} fields, expected {}", rec.len(), p + 1)));
        }
        ys.push(parse_f64(&rec[0], i, "y")?);
        for (j, field) in rec.iter().skip(1).enumerate() {
            xs.push(parse_f64(field, i, &header[j + 1])?);
        }
    }
    if ys.is_empty() {
        return Err(Error::Format("dataset has no rows".into()));
    }
    let n = ys.len();
    Ok((DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys)))
}

/// Writes the CSV at `path` and the metadata next to it.
pub fn save_dataset(path: &Path, design: &GroupedDesign, meta: &DatasetMeta) -> Result<()> {
    write_dataset_csv(design, fs::File::create(path)?)?;
    save_json(&companion_path(path), meta)
}

pub fn load_dataset(path: &Path) -> Result<(GroupedDesign, DatasetMeta)> {
    let (x, y) = read_dataset_csv(fs::File::open(path)?)?;
    let meta_path = companion_path(path);
    let meta: DatasetMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
    let p = x.ncols();
    if let Some(b) = &meta.beta_true {
        if b.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: b.len(),
            });
        }
    }
    let structure = meta.structure(p)?;
    Ok((GroupedDesign::new(x, y, structure)?, meta))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_bytes(value)?)?;
    Ok(())
}

/// Everything that determines a fit besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub m: usize,
    pub seed: u64,
    pub dc: DcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSupport {
    pub mode: SupportMode,
    /// Groups fully contained in the support.
    pub groups: Vec<usize>,
    pub features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitRecord {
    /// Raw-scale coefficients of this shard's refit.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub rank_deficient: bool,
    pub separable: bool,
    pub scaled_gradient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardRecord {
    pub shard_id: usize,
    pub rows: usize,
    pub failed: bool,
    pub lambda: Option<f64>,
    pub bic: Option<f64>,
    pub path_length: usize,
    /// Groups picked by this shard (of the duplicated structure for
    /// overlapping groups).
    pub selected: Vec<usize>,
    /// Selected local fit on the shard's standardized scale.
    pub local_beta: Vec<f64>,
    pub local_intercept: f64,
    pub refit: Option<RefitRecord>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTimings {
    #[serde(flatten)]
    pub summary: DcTimings,
    pub shard_stage1_s: Vec<f64>,
    pub shard_stage2_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub tool: String,
    pub version: String,
    pub config: FitSettings,
    pub support: ResultSupport,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub vote_counts: Vec<usize>,
    pub shards: Vec<ShardRecord>,
    pub flags: Vec<Flag>,
    pub timings: ResultTimings,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Groups whose every feature is in `support`.
pub fn covered_groups(support: &SupportPattern, structure: &GroupStructure) -> Vec<usize> {
    match support.mode {
        SupportMode::Group => support.selected.clone(),
        SupportMode::Feature => (0..structure.num_groups())
            .filter(|&g| structure.group(g).iter().all(|&f| support.contains(f)))
            .collect(),
    }
}

impl ResultFile {
    pub fn from_run(
        result: &DcResult,
        settings: FitSettings,
        structure: &GroupStructure,
        shard_rows: &[usize],
    ) -> Self {
        let shards = result
            .votes
            .iter()
            .map(|v| {
                let refit = result
                    .stage2
                    .iter()
                    .find(|e| e.shard_id == v.shard_id)
                    .map(|e| RefitRecord {
                        beta: e.coefficients.beta.clone(),
                        intercept: e.coefficients.intercept,
                        rank_deficient: e.rank_deficient,
                        separable: e.separable,
                        scaled_gradient: finite(e.scaled_gradient),
                    });
                ShardRecord {
                    shard_id: v.shard_id,
                    rows: shard_rows.get(v.shard_id).copied().unwrap_or(0),
                    failed: v.failed,
                    lambda: finite(v.lambda),
                    bic: finite(v.bic),
                    path_length: v.path_length,
                    selected: v.support.selected.clone(),
                    local_beta: v.local_beta.beta.clone(),
                    local_intercept: v.local_beta.intercept,
                    refit,
                    flags: v.flags.clone(),
                }
            })
            .collect();
        let mut stage2_s = vec![0.0; result.votes.len()];
        for e in &result.stage2 {
            if let Some(t) = stage2_s.get_mut(e.shard_id) {
                *t = e.timing_s;
            }
        }
        ResultFile {
            tool: TOOL_NAME.to_string(),
            version: crate::VERSION.to_string(),
            config: settings,
            support: ResultSupport {
                mode: result.support.mode,
                groups: covered_groups(&result.support, structure),
                features: result.features.clone(),
            },
            beta: result.beta.beta.clone(),
            intercept: result.beta.intercept,
            vote_counts: result.vote_counts.clone(),
            shards,
            flags: result.flags.clone(),
            timings: ResultTimings {
                summary: result.timings.clone(),
                shard_stage1_s: result.votes.iter().map(|v| v.timing_s).collect(),
                shard_stage2_s: stage2_s,
            },
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        to_json_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
