//! Core data types shared by every stage of the evaluation pipeline.

mod hash;
pub mod kv;
pub mod manifest;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, VprError};

pub use hash::{fnv1a_64, hash_descriptor_set};
pub use manifest::{validate_manifest, ExperimentManifest};

/// One holistic descriptor per image, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    count: usize,
    dim: usize,
    data: Vec<f64>,
    labels: Option<Vec<u32>>,
    source_hash: u64,
}

impl DescriptorSet {
    pub fn new(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(VprError::invalid(format!(
                "descriptor set needs count >= 1 and dim >= 1, got {count}x{dim}"
            )));
        }
        if data.len() != count * dim {
            return Err(VprError::dims("descriptor data", count * dim, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(VprError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let source_hash = hash::hash_parts(count, dim, &data);
        Ok(DescriptorSet {
            count,
            dim,
            data,
            labels: None,
            source_hash,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(VprError::dims(
                "descriptor row",
                dim,
                format!("{} (row {bad})", rows[bad].len()),
            ));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.count {
            return Err(VprError::dims("condition labels", self.count, labels.len()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// FNV-1a hash of the canonical serialization; see [`hash_descriptor_set`].
    pub fn source_hash(&self) -> u64 {
        self.source_hash
    }

    /// New set made of the given rows, in the given order. Labels follow their rows.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.count {
                return Err(VprError::invalid(format!(
                    "row {i} out of range for {} rows",
                    self.count
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let out = Self::new(indices.len(), self.dim, data)?;
        match &self.labels {
            Some(l) => out.with_labels(indices.iter().map(|&i| l[i]).collect()),
            None => Ok(out),
        }
    }
}

/// Planar pose; heading in radians within (-π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub image_id: u64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseTrack {
    entries: Vec<Pose>,
}

impl PoseTrack {
    pub fn new(entries: Vec<Pose>) -> Result<Self> {
        for (k, p) in entries.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) {
                return Err(VprError::invalid(format!(
                    "pose {k} has a non-finite component"
                )));
            }
            if !(p.theta > -PI && p.theta <= PI) {
                return Err(VprError::invalid(format!(
                    "pose {k}: theta {} outside (-pi, pi]",
                    p.theta
                )));
            }
            if k > 0 && entries[k - 1].image_id >= p.image_id {
                return Err(VprError::invalid(format!(
                    "pose image ids must be strictly increasing (entry {k})"
                )));
            }
        }
        Ok(PoseTrack { entries })
    }

    pub fn entries(&self) -> &[Pose] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Database × query similarities, row-major (`rows` = database images).
/// Larger values always mean "more similar".
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub measure_tag: String,
    pub postprocess_tag: String,
}

impl SimilarityMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        measure_tag: impl Into<String>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(VprError::invalid("similarity matrix must be non-empty"));
        }
        if values.len() != rows * cols {
            return Err(VprError::dims(
                "similarity values",
                rows * cols,
                values.len(),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VprError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(SimilarityMatrix {
            rows,
            cols,
            values,
            measure_tag: measure_tag.into(),
            postprocess_tag: "none".to_string(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.values[i * self.cols + j])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Applies `f` to every entry, keeping the tags.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|&v| f(v)).collect(),
            self.measure_tag.clone(),
        )?;
        out.postprocess_tag = self.postprocess_tag.clone();
        Ok(out)
    }

    /// Rounds every entry to the nearest 32-bit float, the precision of the on-disk format.
    pub fn to_f32_precision(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f64::from(*v as f32);
        }
        out
    }

    pub fn submatrix(&self, db_rows: &[usize], q_cols: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(db_rows.len() * q_cols.len());
        for &i in db_rows {
            for &j in q_cols {
                values.push(self.get(i, j));
            }
        }
        let mut out = Self::new(
            db_rows.len(),
            q_cols.len(),
            values,
            self.measure_tag.clone(),
        )?;
        out.postprocess_tag = self.postprocess_tag.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GtMode {
    Poses,
    Indices,
}

impl GtMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GtMode::Poses => "poses",
            GtMode::Indices => "indices",
        }
    }
}

impl FromStr for GtMode {
    type Err = VprError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poses" => Ok(GtMode::Poses),
            "indices" => Ok(GtMode::Indices),
            other => Err(VprError::invalid(format!("unknown gt mode `{other}`"))),
        }
    }
}

impl fmt::Display for GtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Thresholds that turn poses or frame indices into a binary ground truth.
/// Only the fields of the active mode take part in the decision.
#[derive(Debug, Clone, PartialEq)]
pub struct GtCriterion {
    pub mode: GtMode,
    pub d_max: f64,
    pub theta_max: f64,
    pub index_max: usize,
    /// Query index → database index; identity when absent (index mode only).
    pub alignment: Option<Vec<usize>>,
}

impl GtCriterion {
    pub fn poses(d_max: f64, theta_max: f64) -> Self {
        GtCriterion {
            mode: GtMode::Poses,
            d_max,
            theta_max,
            index_max: 0,
            alignment: None,
        }
    }

    pub fn indices(index_max: usize) -> Self {
        GtCriterion {
            mode: GtMode::Indices,
            d_max: 0.0,
            theta_max: 0.0,
            index_max,
            alignment: None,
        }
    }

    pub fn with_alignment(mut self, alignment: Vec<usize>) -> Self {
        self.alignment = Some(alignment);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_max >= 0.0 && self.theta_max >= 0.0) {
            return Err(VprError::invalid("gt thresholds must be non-negative"));
        }
        Ok(())
    }
}

/// Binary database × query ground truth, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMatrix {
    rows: usize,
    cols: usize,
    values: Vec<bool>,
    pub criterion: GtCriterion,
}

impl GroundTruthMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<bool>,
        criterion: GtCriterion,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(VprError::dims(
                "ground truth values",
                rows * cols,
                values.len(),
            ));
        }
        Ok(GroundTruthMatrix {
            rows,
            cols,
            values,
            criterion,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        criterion: GtCriterion,
        f: impl Fn(usize, usize) -> bool,
    ) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        GroundTruthMatrix {
            rows,
            cols,
            values,
            criterion,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[i * self.cols + j]
    }

    pub fn num_positives(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn column_has_positive(&self, j: usize) -> bool {
        (0..self.rows).any(|i| self.get(i, j))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.criterion.clone(), |i, j| {
            self.get(j, i)
        })
    }

    /// True when every positive of `self` is also positive in `other`.
    pub fn is_subset_of(&self, other: &GroundTruthMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| !a || b)
    }

    pub fn submatrix(&self, db_rows: &[usize], q_cols: &[usize]) -> Self {
        Self::from_fn(
            db_rows.len(),
            q_cols.len(),
            self.criterion.clone(),
            |i, j| self.get(db_rows[i], q_cols[j]),
        )
    }

    pub(crate) fn check_pair(&self, s: &SimilarityMatrix) -> Result<()> {
        if self.rows != s.rows() || self.cols != s.cols() {
            return Err(VprError::dims(
                "similarity vs ground truth",
                format!("{}x{}", s.rows(), s.cols()),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }
}

/// Intended output of a place recognition run, and therefore how predictions are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    /// Every database × query cell is a potential prediction.
    AllMatchings,
    /// Only each query's best database image is a prediction.
    SingleBest,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::AllMatchings => "all_matchings",
            Protocol::SingleBest => "single_best",
        }
    }
}

impl FromStr for Protocol {
    type Err = VprError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_matchings" => Ok(Protocol::AllMatchings),
            "single_best" => Ok(Protocol::SingleBest),
            other => Err(VprError::invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl SweepPoint {
    pub fn precision(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }
}

/// Exact TP/FP/FN counts per threshold, thresholds strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub protocol: Protocol,
    /// Positive GT cells (all-matchings) or queries with at least one positive (single-best).
    pub num_gt_positives: u64,
}
