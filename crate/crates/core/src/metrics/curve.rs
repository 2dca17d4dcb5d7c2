//! Precision-recall curves and the scalar metrics derived from a sweep.

use crate::error::{Result, VprError};
use crate::model::{Protocol, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub recall: f64,
    pub precision: f64,
    /// Threshold of the sweep point this came from.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// Ascending recall; equal recalls by descending precision.
    pub points: Vec<CurvePoint>,
    pub protocol: Protocol,
    /// Set when no threshold produced a true positive.
    pub degenerate: bool,
}

/// Points with no predictions are skipped. Thresholds that predict only false
/// positives give `(0, 0)`. If no threshold yields a true positive the curve
/// is empty and flagged degenerate.
pub fn pr_curve(sweep: &SweepResult) -> Result<PrCurve> {
    if sweep.points.is_empty() {
        return Err(VprError::invalid("empty sweep"));
    }
    let protocol = sweep.protocol;
    if sweep.points.iter().all(|p| p.tp == 0) {
        return Ok(PrCurve {
            points: vec![],
            protocol,
            degenerate: true,
        });
    }
    let mut points: Vec<CurvePoint> = sweep
        .points
        .iter()
        .filter_map(|p| {
            Some(CurvePoint {
                recall: p.recall()?,
                precision: p.precision()?,
                threshold: p.threshold,
            })
        })
        .collect();
    points.sort_by(|a, b| {
        a.recall
            .total_cmp(&b.recall)
            .then(b.precision.total_cmp(&a.precision))
            .then(a.threshold.total_cmp(&b.threshold))
    });
    points.dedup_by(|b, a| a.recall == b.recall && a.precision == b.precision);
    Ok(PrCurve {
        points,
        protocol,
        degenerate: false,
    })
}

/// Trapezoidal area under the curve. The curve is extended horizontally from
/// its lowest-recall point down to recall 0, and not beyond its highest recall.
pub fn auc(curve: &PrCurve) -> Result<f64> {
    let first = curve.points.first().ok_or(VprError::EmptyCurve)?;
    let mut area = first.recall * first.precision;
    for w in curve.points.windows(2) {
        area += (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0;
    }
    Ok(area)
}

pub fn max_f1(curve: &PrCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(VprError::EmptyCurve);
    }
    Ok(curve
        .points
        .iter()
        .map(|p| {
            let sum = p.precision + p.recall;
            if sum == 0.0 {
                0.0
            } else {
                2.0 * p.precision * p.recall / sum
            }
        })
        .fold(0.0, f64::max))
}

/// Largest recall among sweep points with no false positive and at least one
/// true positive; 0 if there is none.
pub fn recall_at_100_precision(sweep: &SweepResult) -> f64 {
    sweep
        .points
        .iter()
        .filter(|p| p.fp == 0 && p.tp > 0)
        .filter_map(|p| p.recall())
        .fold(0.0, f64::max)
}

/// Mean of the precision at the smallest recall reached with a true positive
/// and the recall at 100% precision.
pub fn extended_precision(sweep: &SweepResult) -> f64 {
    let mut at_min: Option<(f64, f64)> = None;
    for p in sweep.points.iter().filter(|p| p.tp > 0) {
        let (Some(r), Some(pr)) = (p.recall(), p.precision()) else {
            continue;
        };
        at_min = match at_min {
            Some((r0, p0)) if r0 < r || (r0 == r && p0 >= pr) => Some((r0, p0)),
            _ => Some((r, pr)),
        };
    }
    let p_min_recall = at_min.map_or(0.0, |(_, p)| p);
    (p_min_recall + recall_at_100_precision(sweep)) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMetrics {
    pub auc: f64,
    pub max_f1: f64,
    pub recall_at_100_precision: f64,
    pub extended_precision: f64,
    /// No threshold produced a true positive; curve metrics are reported as 0.
    pub degenerate: bool,
}

pub fn scalar_metrics(sweep: &SweepResult) -> Result<ScalarMetrics> {
    let curve = pr_curve(sweep)?;
    let (auc, max_f1) = if curve.degenerate {
        (0.0, 0.0)
    } else {
        (auc(&curve)?, max_f1(&curve)?)
    };
    Ok(ScalarMetrics {
        auc,
        max_f1,
        recall_at_100_precision: recall_at_100_precision(sweep),
        extended_precision: extended_precision(sweep),
        degenerate: curve.degenerate,
    })
}
