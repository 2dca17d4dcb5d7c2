//! Run-level structure of a ground-truth matrix: revisits, stops and
//! unseen queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::model::GroundTruthMatrix;

/// Shortest run of consecutive positives treated as a stop.
pub const MIN_STOP_RUN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StructureReport {
    /// Number of positives per query → number of queries with that count.
    pub per_query_match_counts: BTreeMap<usize, usize>,
    /// Queries whose positives split into more than one contiguous database run.
    pub loop_queries: usize,
    /// Distinct `(start, end)` database ranges of vertical runs (one query, several db frames).
    pub stop_segments_db: Vec<(usize, usize)>,
    /// Distinct `(start, end)` query ranges of horizontal runs (one db frame, several queries).
    pub stop_segments_q: Vec<(usize, usize)>,
    /// Pairs of a vertical and a horizontal stop run that share at least one cell.
    pub stop_rectangles: usize,
    /// Queries without any positive.
    pub exploration_queries: usize,
    pub db_count: usize,
    pub query_count: usize,
}

/// Maximal runs of `true` as inclusive `(start, end)` pairs.
fn runs(cells: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut last = 0;
    for (k, v) in cells.enumerate() {
        match (v, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
        last = k;
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

pub fn structure_report(gt: &GroundTruthMatrix) -> StructureReport {
    let (n, m) = (gt.rows(), gt.cols());
    let mut report = StructureReport {
        db_count: n,
        query_count: m,
        ..Default::default()
    };

    // vertical runs keyed by db range → columns they occur in
    let mut vertical: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for j in 0..m {
        let col_runs = runs((0..n).map(|i| gt.get(i, j)));
        let matches: usize = col_runs.iter().map(|(s, e)| e - s + 1).sum();
        *report.per_query_match_counts.entry(matches).or_default() += 1;
        if col_runs.is_empty() {
            report.exploration_queries += 1;
        }
        if col_runs.len() > 1 {
            report.loop_queries += 1;
        }
        for r in col_runs
            .into_iter()
            .filter(|(s, e)| e - s + 1 >= MIN_STOP_RUN)
        {
            vertical.entry(r).or_default().insert(j);
        }
    }

    let mut horizontal: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for i in 0..n {
        for r in runs((0..m).map(|j| gt.get(i, j)))
            .into_iter()
            .filter(|(s, e)| e - s + 1 >= MIN_STOP_RUN)
        {
            horizontal.entry(r).or_default().insert(i);
        }
    }

    for (&(ds, de), cols) in &vertical {
        for (&(qs, qe), rows) in &horizontal {
            // a shared cell needs a column of the vertical run inside the
            // horizontal range and a row of the horizontal run inside the vertical range
            if cols.range(qs..=qe).next().is_some() && rows.range(ds..=de).next().is_some() {
                report.stop_rectangles += 1;
            }
        }
    }

    report.stop_segments_db = vertical.into_keys().collect();
    report.stop_segments_q = horizontal.into_keys().collect();
    report
}

impl StructureReport {
    /// `key,value` CSV; segment lists are written as `start-end` joined by `;`.
    pub fn to_csv(&self) -> String {
        let segs = |v: &[(usize, usize)]| {
            v.iter()
                .map(|(s, e)| format!("{s}-{e}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        let hist = self
            .per_query_match_counts
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(";");
        let mut out = String::from("key,value\n");
        let _ = writeln!(out, "db_count,{}", self.db_count);
        let _ = writeln!(out, "query_count,{}", self.query_count);
        let _ = writeln!(out, "loop_queries,{}", self.loop_queries);
        let _ = writeln!(out, "stop_segments_db,{}", self.stop_segments_db.len());
        let _ = writeln!(out, "stop_segments_q,{}", self.stop_segments_q.len());
        let _ = writeln!(out, "stop_rectangles,{}", self.stop_rectangles);
        let _ = writeln!(out, "exploration_queries,{}", self.exploration_queries);
        let _ = writeln!(out, "per_query_match_counts,{hist}");
        let _ = writeln!(out, "db_segments,{}", segs(&self.stop_segments_db));
        let _ = writeln!(out, "q_segments,{}", segs(&self.stop_segments_q));
        out
    }
}
