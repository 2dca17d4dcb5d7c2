//! Config-driven pipeline: load → preprocess → compare → postprocess →
//! ground truth → sweep → metrics, with every choice recorded in a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DataSource, GtSource, Preprocess, RunConfig};
use crate::descriptors::{
    apply_stats, cluster_conditions, compute_stats, load_descriptors, load_labels, standardize,
    standardize_by_cluster,
};
use crate::error::{Result, VprError};
use crate::groundtruth::{
    gt_from_indices, gt_from_poses, load_alignment, load_gt_pairs, load_poses,
};
use crate::metrics::{
    make_thresholds, metrics_csv, pr_curve, scalar_metrics, sweep, sweep_csv, PrCurve,
    ScalarMetrics,
};
use crate::model::manifest::{Hash64, Scale};
use crate::model::{
    DescriptorSet, ExperimentManifest, GroundTruthMatrix, GtCriterion, GtMode, PoseTrack, Protocol,
    SimilarityMatrix, SweepResult,
};
use crate::similarity::{build_matrix, save_similarity, seq_postprocess};

/// How ground truth can be built for this run's data.
#[derive(Debug, Clone)]
pub(crate) enum GtBase {
    Places {
        db: Vec<usize>,
        q: Vec<usize>,
        poses: (PoseTrack, PoseTrack),
    },
    Pairs(GroundTruthMatrix),
    Poses(PoseTrack, PoseTrack),
    Indices,
}

/// Loaded (or generated) data shared by every variant of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub db: DescriptorSet,
    pub q: DescriptorSet,
    /// Manifest fields known before any pipeline choice.
    pub base_manifest: ExperimentManifest,
    pub(crate) gt_base: GtBase,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let mut base_manifest = ExperimentManifest {
            has_version: true,
            ..Default::default()
        };
        let (db, q, places) = match &cfg.data {
            DataSource::Synth(spec) => {
                let ds = spec.generate(cfg.seed)?;
                base_manifest = ds.manifest.clone();
                let places = GtBase::Places {
                    db: ds.db_places.clone(),
                    q: ds.q_places.clone(),
                    poses: (ds.db_poses.clone(), ds.q_poses.clone()),
                };
                (ds.db, ds.q, Some(places))
            }
            DataSource::Files {
                db,
                q,
                db_labels,
                q_labels,
            } => {
                let mut db_set = load_descriptors(db)?;
                let mut q_set = load_descriptors(q)?;
                if let Some(p) = db_labels {
                    db_set = db_set.with_labels(load_labels(p)?)?;
                }
                if let Some(p) = q_labels {
                    q_set = q_set.with_labels(load_labels(p)?)?;
                }
                (db_set, q_set, None)
            }
        };
        base_manifest.overlay(&cfg.declared);

        let (n, m) = (db.count(), q.count());
        let gt_base = match &cfg.gt_source {
            GtSource::Synth => {
                places.ok_or_else(|| VprError::invalid("gt = synth needs a synthetic dataset"))?
            }
            GtSource::Pairs(path) => {
                GtBase::Pairs(load_gt_pairs(path, n, m, cfg.criterion.clone())?)
            }
            GtSource::Poses { db, q } => GtBase::Poses(load_poses(db)?, load_poses(q)?),
            GtSource::Indices { .. } => GtBase::Indices,
        };
        Ok(Inputs {
            db,
            q,
            base_manifest,
            gt_base,
        })
    }

    /// Ground truth under `criterion` for the full database and query sets.
    pub fn ground_truth(
        &self,
        cfg: &RunConfig,
        criterion: &GtCriterion,
    ) -> Result<GroundTruthMatrix> {
        let (n, m) = (self.db.count(), self.q.count());
        let check = |poses: &PoseTrack, count: usize, what: &'static str| {
            if poses.len() != count {
                Err(VprError::dims(what, count, poses.len()))
            } else {
                Ok(())
            }
        };
        match (&self.gt_base, criterion.mode) {
            (GtBase::Places { db, q, .. }, GtMode::Indices) => {
                // place indices stand in for frame indices of a single-pass route
                Ok(GroundTruthMatrix::from_fn(
                    n,
                    m,
                    criterion.clone(),
                    |i, j| db[i].abs_diff(q[j]) <= criterion.index_max,
                ))
            }
            (GtBase::Places { poses, .. }, GtMode::Poses) => {
                gt_from_poses(&poses.0, &poses.1, criterion)
            }
            (GtBase::Pairs(gt), _) => {
                if *criterion != gt.criterion {
                    return Err(VprError::invalid(
                        "a ground-truth pairs file has a fixed criterion",
                    ));
                }
                Ok(gt.clone())
            }
            (GtBase::Poses(a, b), _) => {
                check(a, n, "database poses")?;
                check(b, m, "query poses")?;
                gt_from_poses(a, b, criterion)
            }
            (GtBase::Indices, _) => {
                let mut c = criterion.clone();
                if let GtSource::Indices {
                    alignment: Some(path),
                } = &cfg.gt_source
                {
                    c.alignment = Some(load_alignment(path)?);
                }
                let mut gt = gt_from_indices(n, m, &c)?;
                gt.criterion = criterion.clone();
                Ok(gt)
            }
        }
    }
}

/// Applies the preprocessing chain, the measure and the optional sequence
/// step, then rounds to f32 so that results match what the similarity file stores.
pub fn similarity_for(
    cfg: &RunConfig,
    db: &DescriptorSet,
    q: &DescriptorSet,
) -> Result<SimilarityMatrix> {
    let preprocess = || -> Result<(DescriptorSet, DescriptorSet)> {
        Ok(match cfg.preprocess {
            Preprocess::None => (db.clone(), q.clone()),
            Preprocess::Standardize => (standardize(db)?.0, standardize(q)?.0),
            Preprocess::StandardizeDbStats => {
                let stats = compute_stats(db)?;
                (apply_stats(db, &stats)?, apply_stats(q, &stats)?)
            }
            Preprocess::StandardizeByCluster(k) => {
                let db_l = cluster_conditions(db, k, cfg.seed)?;
                let q_l = cluster_conditions(q, k, cfg.seed)?;
                (
                    standardize_by_cluster(db, &db_l)?,
                    standardize_by_cluster(q, &q_l)?,
                )
            }
        })
    };
    let (db_p, q_p) = preprocess().map_err(|e| e.in_stage("preprocess"))?;
    let s = build_matrix(&db_p, &q_p, cfg.measure).map_err(|e| e.in_stage("similarity"))?;
    let s = match &cfg.seqpost {
        Some(sp) => seq_postprocess(&s, sp).map_err(|e| e.in_stage("seqpost"))?,
        None => s,
    };
    Ok(s.to_f32_precision())
}

/// Manifest of one evaluation: declared data properties plus every choice.
pub fn manifest_for(
    cfg: &RunConfig,
    base: &ExperimentManifest,
    db: &DescriptorSet,
    q: &DescriptorSet,
    criterion: &GtCriterion,
    protocol: Protocol,
) -> ExperimentManifest {
    let mut m = base.clone();
    m.has_version = true;
    m.d1_scale = Some(Scale {
        db: db.count(),
        query: q.count(),
    });
    m.db_hash = Some(Hash64(db.source_hash()));
    m.q_hash = Some(Hash64(q.source_hash()));
    m.gt_mode = Some(criterion.mode);
    match criterion.mode {
        GtMode::Poses => {
            m.gt_d_max_m = Some(criterion.d_max);
            m.gt_theta_max_rad = Some(criterion.theta_max);
            m.gt_index_max = None;
        }
        GtMode::Indices => {
            m.gt_index_max = Some(criterion.index_max);
            m.gt_d_max_m = None;
            m.gt_theta_max_rad = None;
        }
    }
    m.preprocessing_chain = Some(cfg.chain_tags());
    m.protocol = Some(protocol);
    m.threshold_count = Some(cfg.threshold_count);
    m.seed = Some(cfg.seed);
    m
}

/// Everything one evaluation produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: ExperimentManifest,
    pub similarity: SimilarityMatrix,
    pub gt: GroundTruthMatrix,
    pub sweep: SweepResult,
    pub curve: PrCurve,
    pub metrics: ScalarMetrics,
}

pub(crate) fn evaluate_matrix(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    protocol: Protocol,
    threshold_count: usize,
) -> Result<(SweepResult, PrCurve, ScalarMetrics)> {
    let thresholds = make_thresholds(s, threshold_count)?;
    let result = sweep(s, gt, &thresholds, protocol)?;
    let curve = pr_curve(&result)?;
    let metrics = scalar_metrics(&result)?;
    Ok((result, curve, metrics))
}

/// Runs the whole pipeline in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let inputs = Inputs::load(cfg).map_err(|e| e.in_stage("load"))?;
    let gt = inputs
        .ground_truth(cfg, &cfg.criterion)
        .map_err(|e| e.in_stage("groundtruth"))?;
    let similarity = similarity_for(cfg, &inputs.db, &inputs.q)?;
    let (sweep, curve, metrics) =
        evaluate_matrix(&similarity, &gt, cfg.protocol, cfg.threshold_count)
            .map_err(|e| e.in_stage("evaluate"))?;
    let manifest = manifest_for(
        cfg,
        &inputs.base_manifest,
        &inputs.db,
        &inputs.q,
        &cfg.criterion,
        cfg.protocol,
    );
    Ok(RunOutput {
        manifest,
        similarity,
        gt,
        sweep,
        curve,
        metrics,
    })
}

fn partial_dir(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| VprError::io(path, e))
}

/// Writes `manifest.txt`, `similarity.vprs`, `sweep.csv` and `metrics.csv`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    out.manifest.save(&dir.join("manifest.txt"))?;
    save_similarity(&out.similarity, &dir.join("similarity.vprs"))?;
    write(&dir.join("sweep.csv"), sweep_csv(&out.sweep))?;
    write(&dir.join("metrics.csv"), metrics_csv(&out.metrics, &[]))
}

/// Replaces `dir` only if it is absent, empty, or a previous run directory.
pub fn check_replaceable(dir: &Path) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let empty = fs::read_dir(dir)
        .map_err(|e| VprError::io(dir, e))?
        .next()
        .is_none();
    if empty || dir.join("manifest.txt").exists() {
        Ok(())
    } else {
        Err(VprError::invalid(format!(
            "{} exists and does not look like a run directory",
            dir.display()
        )))
    }
}

/// Builds the outputs in a sibling `.partial` directory and moves it into
/// place only when everything succeeded; on error nothing is left behind.
pub fn write_atomically(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    check_replaceable(dir)?;
    let tmp = partial_dir(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| VprError::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| VprError::io(&tmp, e))?;
    let result = fill(&tmp).and_then(|()| {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| VprError::io(dir, e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| VprError::io(dir, e))
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

/// Runs the pipeline and writes its outputs into `dir`.
pub fn run_pipeline(cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    check_replaceable(dir)?;
    let out = execute(cfg)?;
    write_atomically(dir, |tmp| {
        write_run(&out, tmp).map_err(|e| e.in_stage("write"))
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_manifest;
    use crate::synth::{ConditionSchedule, SynthSpec, TraversalConfig, WorldConfig};
    use std::path::Path;

    fn spec(n: usize, lc: f64, ln: f64) -> SynthSpec {
        let mut world = WorldConfig::new(n);
        world.dim = 32;
        world.condition_strength = lc;
        world.noise_strength = ln;
        SynthSpec {
            world,
            db: TraversalConfig::new((0..n).collect(), ConditionSchedule::Constant(0)),
            q: TraversalConfig::new((0..n).collect(), ConditionSchedule::Constant(1)),
        }
    }

    #[test]
    fn noiseless_run_is_perfect() {
        let cfg = RunConfig::synthetic(spec(20, 0.0, 0.0), 1);
        let out = execute(&cfg).unwrap();
        assert_eq!(out.metrics.auc, 1.0);
        assert_eq!(out.metrics.recall_at_100_precision, 1.0);
        assert!(
            validate_manifest(&out.manifest, None).is_empty(),
            "{:?}",
            validate_manifest(&out.manifest, None)
        );
    }

    #[test]
    fn run_directory_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::synthetic(spec(25, 0.5, 0.5), 3);
        let read_all = |d: &Path| {
            [
                "manifest.txt",
                "similarity.vprs",
                "sweep.csv",
                "metrics.csv",
            ]
            .map(|f| fs::read(d.join(f)).unwrap())
        };
        let a = dir.path().join("a");
        run_pipeline(&cfg, &a).unwrap();
        let first = read_all(&a);
        run_pipeline(&cfg, &a).unwrap();
        assert_eq!(read_all(&a), first);
        assert!(!partial_dir(&a).exists());
        let b = dir.path().join("b");
        run_pipeline(&cfg, &b).unwrap();
        assert_eq!(read_all(&b), first);
    }

    #[test]
    fn failing_stage_is_named_and_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::synthetic(spec(5, 0.0, 0.0), 1);
        cfg.preprocess = Preprocess::StandardizeByCluster(10);
        let out = dir.path().join("run");
        let err = run_pipeline(&cfg, &out).unwrap_err();
        assert!(err.to_string().contains("preprocess"), "{err}");
        assert!(!out.exists() && !partial_dir(&out).exists());
    }

    #[test]
    fn refuses_to_replace_foreign_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        let cfg = RunConfig::synthetic(spec(5, 0.0, 0.0), 1);
        assert!(run_pipeline(&cfg, dir.path()).is_err());
        assert!(dir.path().join("notes.txt").exists());
    }

    #[test]
    fn similarity_file_reproduces_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::synthetic(spec(30, 0.3, 0.8), 9);
        let out = run_pipeline(&cfg, dir.path()).unwrap();
        let s = crate::similarity::load_similarity(&dir.path().join("similarity.vprs")).unwrap();
        let (_, _, m) = evaluate_matrix(&s, &out.gt, cfg.protocol, cfg.threshold_count).unwrap();
        assert_eq!(m, out.metrics);
    }

    #[test]
    fn one_knob_changes_one_line() {
        let base = RunConfig::synthetic(spec(20, 0.5, 0.5), 2);
        let mut other = base.clone();
        other.preprocess = Preprocess::Standardize;
        let a = execute(&base).unwrap().manifest;
        let b = execute(&other).unwrap().manifest;
        let diff = a.diff_lines(&b);
        assert_eq!(diff.len(), 2, "{diff:?}");
        assert!(diff[0].starts_with("- preprocessing_chain"));
    }

    #[test]
    fn standardization_helps_under_condition_shift() {
        let mut wins = 0;
        for seed in 0..10 {
            let raw = RunConfig::synthetic(spec(60, 2.0, 0.5), seed);
            let mut std = raw.clone();
            std.preprocess = Preprocess::Standardize;
            if execute(&std).unwrap().metrics.auc >= execute(&raw).unwrap().metrics.auc {
                wins += 1;
            }
        }
        assert!(wins >= 8, "{wins}/10");
    }
}
