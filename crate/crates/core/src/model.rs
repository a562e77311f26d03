//! Grouped designs, coefficient vectors and support patterns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition (or cover) of the feature indices `0..p` into penalized groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
    p: usize,
    overlapping: bool,
    weights: Vec<f64>,
}

/// Checks a group list and builds a [`GroupStructure`] with weights `sqrt(d_i)`.
///
/// Index lists are sorted, so the result does not depend on the order in
/// which members of a group are listed.
pub fn validate_structure(
    groups: Vec<Vec<usize>>,
    p: usize,
    overlapping: bool,
) -> Result<GroupStructure> {
    if p == 0 {
        return Err(Error::InvalidDesign("p must be at least 1".into()));
    }
    let mut owner: Vec<Option<usize>> = vec![None; p];
    let mut sorted = Vec::with_capacity(groups.len());
    for (g, members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyGroup(g));
        }
        let mut members = members;
        members.sort_unstable();
        for w in members.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex {
                    group: g,
                    index: w[0],
                });
            }
        }
        for &f in &members {
            if f >= p {
                return Err(Error::IndexOutOfRange { index: f, p });
            }
            match owner[f] {
                Some(first) if !overlapping => {
                    return Err(Error::OverlapInNonOverlapMode {
                        feature: f,
                        first,
                        second: g,
                    })
                }
                Some(_) => {}
                None => owner[f] = Some(g),
            }
        }
        sorted.push(members);
    }
    if sorted.is_empty() {
        return Err(Error::InvalidDesign("at least one group is required".into()));
    }
    if let Some(f) = owner.iter().position(Option::is_none) {
        return Err(Error::UncoveredFeature(f));
    }
    let weights = sorted.iter().map(|g| (g.len() as f64).sqrt()).collect();
    Ok(GroupStructure {
        groups: sorted,
        p,
        overlapping,
        weights,
    })
}

impl GroupStructure {
    /// Consecutive groups of `size` features covering `0..p`.
    pub fn contiguous(p: usize, size: usize) -> Result<Self> {
        if size == 0 || !p.is_multiple_of(size) {
            return Err(Error::InvalidDesign(format!(
                "p = {p} is not a multiple of group size {size}"
            )));
        }
        validate_structure(
            (0..p / size)
                .map(|g| (g * size..(g + 1) * size).collect())
                .collect(),
            p,
            false,
        )
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.groups.len() {
            return Err(Error::DimensionMismatch {
                expected: self.groups.len(),
                got: weights.len(),
            });
        }
        if let Some((group, &weight)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidWeight { group, weight });
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Union of the features of the given groups, sorted.
    pub fn features_of(&self, groups: &[usize]) -> Vec<usize> {
        let mut mask = vec![false; self.p];
        for &g in groups {
            for &f in &self.groups[g] {
                mask[f] = true;
            }
        }
        mask_to_indices(&mask)
    }
}

/// Standardization applied to a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardize {
    /// Center and scale every column to unit standard deviation.
    #[default]
    Full,
    /// Center only.
    CenterOnly,
}

/// Record of the affine transform applied by [`GroupedDesign::standardize`].
///
/// A standardized column is `(x - mean) / scale`; the standard deviation uses
/// the `1/n` convention, so every retained column has squared norm `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub constant_columns: Vec<usize>,
}

impl Standardization {
    /// Maps coefficients fitted on the standardized design back to the raw scale.
    pub fn to_original(&self, coefs: &GroupCoefficients) -> GroupCoefficients {
        let beta: Vec<f64> = coefs
            .beta
            .iter()
            .zip(&self.x_scale)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = beta.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum();
        GroupCoefficients {
            beta,
            intercept: self.y_mean + coefs.intercept - shift,
        }
    }

    pub fn to_standardized(&self, coefs: &GroupCoefficients) -> GroupCoefficients {
        let shift: f64 = coefs.beta.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum();
        GroupCoefficients {
            beta: coefs
                .beta
                .iter()
                .zip(&self.x_scale)
                .map(|(b, s)| b * s)
                .collect(),
            intercept: coefs.intercept - self.y_mean + shift,
        }
    }
}

/// Design matrix, response and group structure.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    x: DMatrix<f64>,
    y: DVector<f64>,
    structure: GroupStructure,
    standardization: Option<Standardization>,
}

impl GroupedDesign {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, structure: GroupStructure) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidDesign(format!("empty design ({n}x{p})")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if structure.p() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: structure.p(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("non-finite entry".into()));
        }
        Ok(GroupedDesign {
            x,
            y,
            structure,
            standardization: None,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn structure(&self) -> &GroupStructure {
        &self.structure
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Column `j` as a contiguous slice (storage is column-major).
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Same rows and structure with a different penalty weighting.
    pub fn with_structure(mut self, structure: GroupStructure) -> Result<Self> {
        if structure.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: structure.p(),
            });
        }
        self.structure = structure;
        Ok(self)
    }

    /// Design restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> GroupedDesign {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        GroupedDesign {
            x,
            y,
            structure: self.structure.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Centers (and by default scales) each column; centers the response
    /// when `center_response` is set. Constant columns become zero with
    /// scale 1 and are listed in the record.
    ///
    /// Standardizing an already standardized design composes the two
    /// transforms so coefficients still map back to the raw scale.
    pub fn standardize(&self, mode: Standardize, center_response: bool) -> GroupedDesign {
        let n = self.n();
        let p = self.p();
        let nf = n as f64;
        let mut x = self.x.clone();
        let mut x_mean = vec![0.0; p];
        let mut x_scale = vec![1.0; p];
        let mut constant_columns = Vec::new();
        {
            let data = x.as_mut_slice();
            for j in 0..p {
                let col = &mut data[j * n..(j + 1) * n];
                let mean = col.iter().sum::<f64>() / nf;
                for v in col.iter_mut() {
                    *v -= mean;
                }
                let sd = (col.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
                x_mean[j] = mean;
                if sd <= 1e-12 * (1.0 + mean.abs()) {
                    col.iter_mut().for_each(|v| *v = 0.0);
                    constant_columns.push(j);
                } else if mode == Standardize::Full {
                    for v in col.iter_mut() {
                        *v /= sd;
                    }
                    x_scale[j] = sd;
                }
            }
        }
        let mut y = self.y.clone();
        let mut y_mean = 0.0;
        if center_response {
            y_mean = y.sum() / nf;
            y.add_scalar_mut(-y_mean);
        }
        let record = match &self.standardization {
            None => Standardization {
                x_mean,
                x_scale,
                y_mean,
                constant_columns,
            },
            Some(prev) => Standardization {
                x_mean: (0..p)
                    .map(|j| prev.x_mean[j] + x_mean[j] * prev.x_scale[j])
                    .collect(),
                x_scale: (0..p).map(|j| prev.x_scale[j] * x_scale[j]).collect(),
                y_mean: prev.y_mean + y_mean,
                constant_columns,
            },
        };
        GroupedDesign {
            x,
            y,
            structure: self.structure.clone(),
            standardization: Some(record),
        }
    }

    /// `X beta + intercept` on this design's own scale.
    pub fn predict(&self, coefs: &GroupCoefficients) -> DVector<f64> {
        let mut out = DVector::from_element(self.n(), coefs.intercept);
        for (j, &b) in coefs.beta.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(self.column(j)) {
                    *o += b * x;
                }
            }
        }
        out
    }
}

/// Coefficient vector with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoefficients {
    pub beta: Vec<f64>,
    pub intercept: f64,
}

impl GroupCoefficients {
    pub fn zeros(p: usize) -> Self {
        GroupCoefficients {
            beta: vec![0.0; p],
            intercept: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Entries of group `i`, in the group's index order.
    pub fn group_view(&self, structure: &GroupStructure, i: usize) -> Vec<f64> {
        structure.group(i).iter().map(|&f| self.beta[f]).collect()
    }

    pub fn group_norm(&self, structure: &GroupStructure, i: usize) -> f64 {
        structure
            .group(i)
            .iter()
            .map(|&f| self.beta[f] * self.beta[f])
            .sum::<f64>()
            .sqrt()
    }

    /// Groups with at least one nonzero coefficient.
    pub fn group_support(&self, structure: &GroupStructure) -> SupportPattern {
        SupportPattern::groups(
            (0..structure.num_groups())
                .filter(|&g| structure.group(g).iter().any(|&f| self.beta[f] != 0.0))
                .collect(),
        )
    }

    pub fn feature_support(&self) -> SupportPattern {
        SupportPattern::features(
            self.beta
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| j)
                .collect(),
        )
    }

    pub fn nonzero_count(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    Group,
    Feature,
}

/// Sorted set of selected groups or features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPattern {
    pub mode: SupportMode,
    pub selected: Vec<usize>,
}

impl SupportPattern {
    pub fn new(mode: SupportMode, mut selected: Vec<usize>) -> Self {
        selected.sort_unstable();
        selected.dedup();
        SupportPattern { mode, selected }
    }

    pub fn groups(selected: Vec<usize>) -> Self {
        Self::new(SupportMode::Group, selected)
    }

    pub fn features(selected: Vec<usize>) -> Self {
        Self::new(SupportMode::Feature, selected)
    }

    pub fn empty(mode: SupportMode) -> Self {
        SupportPattern {
            mode,
            selected: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.selected.binary_search(&i).is_ok()
    }

    /// Checks every index against the bound for this mode (`q` or `p`).
    pub fn validate(&self, bound: usize) -> Result<()> {
        match self.selected.iter().find(|&&i| i >= bound) {
            Some(&index) => Err(Error::IndexOutOfRange { index, p: bound }),
            None => Ok(()),
        }
    }

    /// Feature indices covered by this support.
    pub fn features_in(&self, structure: &GroupStructure) -> Vec<usize> {
        match self.mode {
            SupportMode::Feature => self.selected.clone(),
            SupportMode::Group => structure.features_of(&self.selected),
        }
    }
}

pub(crate) fn mask_to_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect()
}
