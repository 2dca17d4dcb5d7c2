//! Comparability audits: the same data evaluated under variants that differ
//! in one evaluation choice, with the spread of the resulting metrics.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::RunConfig;
use super::pipeline::{evaluate_matrix, manifest_for, similarity_for, write_atomically, Inputs};
use crate::error::{Result, VprError};
use crate::groundtruth::{structure_report, StructureReport};
use crate::metrics::{curve_csv, metrics_csv, sweep_csv, PrCurve, ScalarMetrics};
use crate::model::{
    ExperimentManifest, GroundTruthMatrix, GtCriterion, Protocol, SimilarityMatrix, SweepResult,
};
use crate::synth::{conditional_histograms, histograms_csv, HistKey, Histogram};

/// Slices shorter than this are rejected by [`audit_fraction`].
pub const MIN_SLICE_FRAMES: usize = 10;
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditKind {
    Fraction,
    GtThreshold,
    Protocol,
    Separability,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::Fraction => "fraction",
            AuditKind::GtThreshold => "gtdist",
            AuditKind::Protocol => "protocol",
            AuditKind::Separability => "separability",
        }
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sweep, curve and metrics of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sweep: SweepResult,
    pub curve: PrCurve,
    pub metrics: ScalarMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub manifest: ExperimentManifest,
    /// Positive GT cells of this variant.
    pub gt_positives: usize,
    /// `None` when the variant has no positives; such variants are flagged.
    pub evaluation: Option<Evaluation>,
    /// Whether this variant contributes to [`AuditReport::spread`].
    pub in_spread: bool,
}

impl Variant {
    pub fn flagged(&self) -> bool {
        self.evaluation.is_none()
    }

    pub fn metrics(&self) -> Option<&ScalarMetrics> {
        self.evaluation.as_ref().map(|e| &e.metrics)
    }

    /// Directory of this variant inside a written report.
    pub fn dir_name(&self, index: usize) -> String {
        format!("{index:02}_{}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub kind: AuditKind,
    pub variants: Vec<Variant>,
    /// max − min AUC over the variants marked `in_spread` that have metrics.
    pub spread: f64,
    /// Extra named values, e.g. histogram overlaps.
    pub values: Vec<(String, f64)>,
    /// Set by the separability audit when conditions dominate place identity.
    pub flag: bool,
    pub warnings: Vec<String>,
    /// Extra files written next to the report: (name, contents).
    pub artifacts: Vec<(String, String)>,
}

fn spread_of(variants: &[Variant]) -> f64 {
    let aucs: Vec<f64> = variants
        .iter()
        .filter(|v| v.in_spread)
        .filter_map(|v| v.metrics().map(|m| m.auc))
        .collect();
    match (
        aucs.iter().copied().reduce(f64::max),
        aucs.iter().copied().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) => hi - lo,
        _ => 0.0,
    }
}

impl AuditReport {
    fn new(kind: AuditKind, variants: Vec<Variant>) -> Self {
        let spread = spread_of(&variants);
        AuditReport {
            kind,
            variants,
            spread,
            values: Vec::new(),
            flag: false,
            warnings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// One row per variant followed by `spread` and any extra values.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("variant,auc,max_f1,recall_at_100_precision,extended_precision,gt_positives,flagged,curve\n");
        for (k, v) in self.variants.iter().enumerate() {
            let curve = format!("{}/curve.csv", v.dir_name(k));
            match v.metrics() {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},false,{curve}",
                        v.name,
                        m.auc,
                        m.max_f1,
                        m.recall_at_100_precision,
                        m.extended_precision,
                        v.gt_positives
                    );
                }
                None => {
                    let _ = writeln!(out, "{},,,,,{},true,", v.name, v.gt_positives);
                }
            }
        }
        out
    }

    /// `key,value` summary: kind, spread, flag and extra values.
    pub fn summary_csv(&self) -> String {
        let mut out = format!(
            "key,value\nkind,{}\nvariants,{}\nspread,{}\nflag,{}\n",
            self.kind,
            self.variants.len(),
            self.spread,
            self.flag
        );
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    /// gnuplot script overlaying the curves of all evaluated variants.
    pub fn plot_script(&self) -> String {
        let mut out = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'recall'\nset ylabel 'precision'\n\
             set xrange [0:1]\nset yrange [0:1.05]\nset title '{} audit'\nplot \\\n",
            self.kind
        );
        let curves: Vec<String> = self
            .variants
            .iter()
            .enumerate()
            .filter(|(_, v)| v.evaluation.is_some())
            .map(|(k, v)| {
                format!(
                    "  '{}/curve.csv' using 1:2 with lines title '{}'",
                    v.dir_name(k),
                    v.name
                )
            })
            .collect();
        out.push_str(&curves.join(", \\\n"));
        out.push('\n');
        out
    }

    /// Writes per-variant directories, `report.csv`, `summary.csv`,
    /// `plot.gp`, `warnings.txt` and the artifacts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomically(dir, |tmp| {
            let put = |name: &str, contents: &str| {
                let p = tmp.join(name);
                fs::write(&p, contents).map_err(|e| VprError::io(p, e))
            };
            for (k, v) in self.variants.iter().enumerate() {
                let sub = tmp.join(v.dir_name(k));
                fs::create_dir(&sub).map_err(|e| VprError::io(&sub, e))?;
                v.manifest.save(&sub.join("manifest.txt"))?;
                if let Some(e) = &v.evaluation {
                    let files = [
                        ("sweep.csv", sweep_csv(&e.sweep)),
                        ("curve.csv", curve_csv(&e.curve)),
                        ("metrics.csv", metrics_csv(&e.metrics, &[])),
                    ];
                    for (name, text) in files {
                        let p = sub.join(name);
                        fs::write(&p, text).map_err(|e| VprError::io(p, e))?;
                    }
                }
            }
            put("report.csv", &self.report_csv())?;
            put("summary.csv", &self.summary_csv())?;
            put("plot.gp", &self.plot_script())?;
            let mut warnings = self.warnings.join("\n");
            if !warnings.is_empty() {
                warnings.push('\n');
            }
            put("warnings.txt", &warnings)?;
            for (name, contents) in &self.artifacts {
                put(name, contents)?;
            }
            Ok(())
        })
    }
}

fn evaluate_variant(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    protocol: Protocol,
    threshold_count: usize,
) -> Result<Option<Evaluation>> {
    if gt.num_positives() == 0 {
        return Ok(None);
    }
    let (sweep, curve, metrics) = evaluate_matrix(s, gt, protocol, threshold_count)?;
    Ok(Some(Evaluation {
        sweep,
        curve,
        metrics,
    }))
}

/// Contiguous index ranges splitting `len` frames into `parts`; the last one
/// takes the remainder.
pub fn slice_ranges(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let size = len / parts;
    (0..parts)
        .map(|f| f * size..if f + 1 == parts { len } else { (f + 1) * size })
        .collect()
}

/// Every `parts`-th frame, `len / parts` of them.
pub fn uniform_subsample(len: usize, parts: usize) -> Vec<usize> {
    (0..len / parts).map(|k| k * parts).collect()
}

/// Evaluates the full pipeline on `fractions` contiguous slices of the
/// database and query sets, plus one uniform subsample of equal size. The
/// database is sliced proportionally to the queries. Spread covers the
/// contiguous slices only.
pub fn audit_fraction(cfg: &RunConfig, fractions: usize) -> Result<AuditReport> {
    if fractions < 2 {
        return Err(VprError::invalid(format!(
            "fractions = {fractions} must be >= 2"
        )));
    }
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage("load"))?;
    let gt = inputs
        .ground_truth(cfg, &cfg.criterion)
        .map_err(|e| e.in_stage("groundtruth"))?;
    let (n, m) = (inputs.db.count(), inputs.q.count());
    if n / fractions < MIN_SLICE_FRAMES || m / fractions < MIN_SLICE_FRAMES {
        return Err(VprError::invalid(format!(
            "{fractions} fractions of {n} database / {m} query frames leave slices under {MIN_SLICE_FRAMES} frames"
        )));
    }
    let mut plans: Vec<(String, Vec<usize>, Vec<usize>, bool)> = slice_ranges(n, fractions)
        .into_iter()
        .zip(slice_ranges(m, fractions))
        .enumerate()
        .map(|(f, (d, q))| (format!("slice{}", f + 1), d.collect(), q.collect(), true))
        .collect();
    plans.push((
        "uniform".to_string(),
        uniform_subsample(n, fractions),
        uniform_subsample(m, fractions),
        false,
    ));

    let variants = plans
        .into_par_iter()
        .map(|(name, db_rows, q_cols, in_spread)| {
            let db = inputs.db.select_rows(&db_rows)?;
            let q = inputs.q.select_rows(&q_cols)?;
            let sub_gt = gt.submatrix(&db_rows, &q_cols);
            let s = similarity_for(cfg, &db, &q)?;
            let evaluation = evaluate_variant(&s, &sub_gt, cfg.protocol, cfg.threshold_count)?;
            Ok(Variant {
                manifest: manifest_for(
                    cfg,
                    &inputs.base_manifest,
                    &db,
                    &q,
                    &cfg.criterion,
                    cfg.protocol,
                ),
                gt_positives: sub_gt.num_positives(),
                evaluation,
                in_spread,
                name,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("evaluate"))?;
    let mut report = AuditReport::new(AuditKind::Fraction, variants);
    for v in report.variants.iter().filter(|v| v.flagged()) {
        report
            .warnings
            .push(format!("{} has no ground-truth positives", v.name));
    }
    Ok(report)
}

/// One evaluation per criterion over the same similarity matrix.
pub fn audit_gt_threshold(cfg: &RunConfig, criteria: &[GtCriterion]) -> Result<AuditReport> {
    if criteria.len() < 2 {
        return Err(VprError::invalid(
            "at least two ground-truth criteria are needed",
        ));
    }
    if criteria.iter().any(|c| c.mode != criteria[0].mode) {
        return Err(VprError::invalid(
            "ground-truth criteria must share one mode",
        ));
    }
    for c in criteria {
        c.validate()?;
    }
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage("load"))?;
    let s = similarity_for(cfg, &inputs.db, &inputs.q)?;
    let variants = criteria
        .par_iter()
        .map(|c| {
            let gt = inputs
                .ground_truth(cfg, c)
                .map_err(|e| e.in_stage("groundtruth"))?;
            let evaluation = evaluate_variant(&s, &gt, cfg.protocol, cfg.threshold_count)
                .map_err(|e| e.in_stage("evaluate"))?;
            Ok(Variant {
                name: criterion_name(c),
                manifest: manifest_for(
                    cfg,
                    &inputs.base_manifest,
                    &inputs.db,
                    &inputs.q,
                    c,
                    cfg.protocol,
                ),
                gt_positives: gt.num_positives(),
                evaluation,
                in_spread: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = AuditReport::new(AuditKind::GtThreshold, variants);
    for v in report.variants.iter().filter(|v| v.flagged()) {
        report
            .warnings
            .push(format!("{} has no ground-truth positives", v.name));
    }
    Ok(report)
}

fn criterion_name(c: &GtCriterion) -> String {
    match c.mode {
        crate::model::GtMode::Poses => format!("d{}_theta{}", c.d_max, c.theta_max),
        crate::model::GtMode::Indices => format!("index{}", c.index_max),
    }
}

/// Evaluates the same matrix and ground truth under both protocols.
pub fn audit_protocol(cfg: &RunConfig) -> Result<AuditReport> {
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage("load"))?;
    let gt = inputs
        .ground_truth(cfg, &cfg.criterion)
        .map_err(|e| e.in_stage("groundtruth"))?;
    let s = similarity_for(cfg, &inputs.db, &inputs.q)?;
    protocol_report(cfg, &inputs, &s, &gt)
}

/// Protocol audit over a given matrix and ground truth.
pub fn audit_protocol_on(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    threshold_count: usize,
) -> Result<AuditReport> {
    let manifest = ExperimentManifest {
        has_version: true,
        ..Default::default()
    };
    let variants = [Protocol::AllMatchings, Protocol::SingleBest]
        .par_iter()
        .map(|&p| {
            let mut manifest = manifest.clone();
            manifest.protocol = Some(p);
            manifest.threshold_count = Some(threshold_count);
            Ok(Variant {
                name: p.as_str().to_string(),
                manifest,
                gt_positives: gt.num_positives(),
                evaluation: evaluate_variant(s, gt, p, threshold_count)?,
                in_spread: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(with_protocol_warnings(
        AuditReport::new(AuditKind::Protocol, variants),
        gt,
    ))
}

fn protocol_report(
    cfg: &RunConfig,
    inputs: &Inputs,
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
) -> Result<AuditReport> {
    let variants = [Protocol::AllMatchings, Protocol::SingleBest]
        .par_iter()
        .map(|&p| {
            Ok(Variant {
                name: p.as_str().to_string(),
                manifest: manifest_for(
                    cfg,
                    &inputs.base_manifest,
                    &inputs.db,
                    &inputs.q,
                    &cfg.criterion,
                    p,
                ),
                gt_positives: gt.num_positives(),
                evaluation: evaluate_variant(s, gt, p, cfg.threshold_count)
                    .map_err(|e| e.in_stage("evaluate"))?,
                in_spread: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(with_protocol_warnings(
        AuditReport::new(AuditKind::Protocol, variants),
        gt,
    ))
}

fn with_protocol_warnings(mut report: AuditReport, gt: &GroundTruthMatrix) -> AuditReport {
    let multi = (0..gt.cols()).any(|j| (0..gt.rows()).filter(|&i| gt.get(i, j)).nth(1).is_some());
    if !multi {
        report.warnings.push(
            "no query has two or more positives; the protocols cannot differ in recall".into(),
        );
    }
    if gt.num_positives() == 0 {
        report.warnings.push("ground truth has no positives".into());
    }
    report
}

/// Same-place, different-place within one condition and different-place
/// across conditions, each merged over all condition pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityGroups {
    pub same: Option<Histogram>,
    pub different_within: Option<Histogram>,
    pub different_cross: Option<Histogram>,
}

pub fn group_histograms(
    hists: &std::collections::BTreeMap<HistKey, Histogram>,
) -> SeparabilityGroups {
    let merged = |pred: &dyn Fn(&HistKey) -> bool| {
        hists
            .iter()
            .filter(|(k, _)| pred(k))
            .fold(None, |acc: Option<Histogram>, (_, h)| {
                Some(match acc {
                    Some(mut a) => {
                        a.merge(h);
                        a
                    }
                    None => h.clone(),
                })
            })
    };
    SeparabilityGroups {
        same: merged(&|k| k.same_place),
        different_within: merged(&|k| !k.same_place && k.within_condition()),
        different_cross: merged(&|k| !k.same_place && !k.within_condition()),
    }
}

/// Similarity distributions conditioned on place identity and condition.
/// Flags the report when same-place scores overlap more with
/// different-place scores under one condition than with different-place
/// scores across conditions.
pub fn audit_separability(cfg: &RunConfig, bins: usize) -> Result<AuditReport> {
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage("load"))?;
    let (Some(db_labels), Some(q_labels)) = (inputs.db.labels(), inputs.q.labels()) else {
        return Err(VprError::invalid(
            "separability needs condition labels for database and queries",
        ));
    };
    let gt = inputs
        .ground_truth(cfg, &cfg.criterion)
        .map_err(|e| e.in_stage("groundtruth"))?;
    let s = similarity_for(cfg, &inputs.db, &inputs.q)?;
    let evaluation = evaluate_variant(&s, &gt, cfg.protocol, cfg.threshold_count)
        .map_err(|e| e.in_stage("evaluate"))?;
    let variant = Variant {
        name: "full".to_string(),
        manifest: manifest_for(
            cfg,
            &inputs.base_manifest,
            &inputs.db,
            &inputs.q,
            &cfg.criterion,
            cfg.protocol,
        ),
        gt_positives: gt.num_positives(),
        evaluation,
        in_spread: true,
    };
    let mut report = AuditReport::new(AuditKind::Separability, vec![variant]);
    let hists = conditional_histograms(&s, &gt, db_labels, q_labels, bins)
        .map_err(|e| e.in_stage("histograms"))?;
    report
        .artifacts
        .push(("histograms.csv".into(), histograms_csv(&hists)));
    separability_verdict(&mut report, &group_histograms(&hists));
    Ok(report)
}

fn separability_verdict(report: &mut AuditReport, g: &SeparabilityGroups) {
    let conditions_seen =
        g.different_within.is_some() as usize + g.different_cross.is_some() as usize;
    let Some(same) = &g.same else {
        report.warnings.push("no same-place cells".into());
        return;
    };
    let within = g.different_within.as_ref().map(|h| same.overlap(h));
    let cross = g.different_cross.as_ref().map(|h| same.overlap(h));
    if let Some(v) = within {
        report
            .values
            .push(("overlap_same_different_within".into(), v));
    }
    if let Some(v) = cross {
        report
            .values
            .push(("overlap_same_different_cross".into(), v));
    }
    match (within, cross) {
        (Some(w), Some(c)) => report.flag = w > c,
        (Some(_), None) => report
            .warnings
            .push("a single condition: only same and different place groups".into()),
        (None, Some(_)) => {}
        (None, None) if conditions_seen == 0 => {
            report.warnings.push("no different-place cells".into())
        }
        (None, None) => {}
    }
}

/// Loops, stops and exploration queries found in the run's ground truth.
pub fn audit_structure(cfg: &RunConfig) -> Result<StructureReport> {
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage("load"))?;
    let gt = inputs
        .ground_truth(cfg, &cfg.criterion)
        .map_err(|e| e.in_stage("groundtruth"))?;
    Ok(structure_report(&gt))
}
