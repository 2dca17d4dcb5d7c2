//! Similarity distributions conditioned on place identity and appearance
//! condition.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Result, VprError};
use crate::model::{GroundTruthMatrix, SimilarityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistKey {
    /// Whether the cells show the same place.
    pub same_place: bool,
    /// Unordered condition pair, smaller label first.
    pub conditions: (u32, u32),
}

impl HistKey {
    pub fn within_condition(&self) -> bool {
        self.conditions.0 == self.conditions.1
    }

    pub fn name(&self) -> String {
        format!(
            "{}_{}_{}",
            if self.same_place { "same" } else { "different" },
            self.conditions.0,
            self.conditions.1
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Edges are uniform over `[lo, hi]`.
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin masses summing to 1.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Adds the counts of another histogram over the same bins.
    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Histogram intersection: sum of the bin-wise minima of the two
    /// normalized distributions.
    pub fn overlap(&self, other: &Histogram) -> f64 {
        self.probabilities()
            .iter()
            .zip(other.probabilities())
            .map(|(a, b)| a.min(b))
            .sum()
    }
}

pub(crate) fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let k = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
    k.min(bins - 1)
}

/// Routes every cell `(i, j)` by `GT[i][j]` and the unordered label pair
/// `(db_labels[i], q_labels[j])`. Groups without cells are absent.
pub fn conditional_histograms(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    db_labels: &[u32],
    q_labels: &[u32],
    bins: usize,
) -> Result<BTreeMap<HistKey, Histogram>> {
    gt.check_pair(s)?;
    if db_labels.len() != s.rows() || q_labels.len() != s.cols() {
        return Err(VprError::dims(
            "condition labels",
            format!("{}+{}", s.rows(), s.cols()),
            format!("{}+{}", db_labels.len(), q_labels.len()),
        ));
    }
    if bins < 2 {
        return Err(VprError::invalid(format!("bins = {bins} must be >= 2")));
    }
    let (lo, hi) = s.min_max();
    let mut out: BTreeMap<HistKey, Histogram> = BTreeMap::new();
    for (i, &a) in db_labels.iter().enumerate() {
        for (j, &b) in q_labels.iter().enumerate() {
            let key = HistKey {
                same_place: gt.get(i, j),
                conditions: (a.min(b), a.max(b)),
            };
            let h = out.entry(key).or_insert_with(|| Histogram {
                lo,
                hi,
                counts: vec![0; bins],
            });
            h.counts[bin_of(s.get(i, j), lo, hi, bins)] += 1;
        }
    }
    Ok(out)
}

/// One row per bin: lower edge, upper edge, then one probability column per group.
pub fn histograms_csv(hists: &BTreeMap<HistKey, Histogram>) -> String {
    let Some(first) = hists.values().next() else {
        return String::from("bin_lo,bin_hi\n");
    };
    let bins = first.counts.len();
    let mut out = String::from("bin_lo,bin_hi");
    for k in hists.keys() {
        out.push(',');
        out.push_str(&k.name());
    }
    out.push('\n');
    let probs: Vec<Vec<f64>> = hists.values().map(Histogram::probabilities).collect();
    let width = (first.hi - first.lo) / bins as f64;
    for b in 0..bins {
        let _ = write!(
            out,
            "{},{}",
            first.lo + width * b as f64,
            first.lo + width * (b + 1) as f64
        );
        for p in &probs {
            let _ = write!(out, ",{}", p[b]);
        }
        out.push('\n');
    }
    out
}
