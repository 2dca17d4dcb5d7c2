use std::fs;

use vpr_core::harness::{
    audit_gt_threshold, audit_protocol, execute, run_pipeline, Preprocess, RunConfig,
};
use vpr_core::model::validate_manifest;
use vpr_core::synth::{ConditionSchedule, SynthSpec, TraversalConfig, WorldConfig};
use vpr_core::{GtCriterion, GtMode, Protocol};

fn spec() -> SynthSpec {
    let mut world = WorldConfig::new(50);
    world.dim = 48;
    world.condition_strength = 0.4;
    world.noise_strength = 0.9;
    world.viewpoint_jitter = 0.3;
    SynthSpec {
        world,
        db: TraversalConfig::new((0..50).collect(), ConditionSchedule::Constant(0)),
        q: TraversalConfig::new(
            (0..50).collect(),
            ConditionSchedule::Switch {
                from: 0,
                to: 1,
                at: 25,
            },
        ),
    }
}

#[test]
fn saved_dataset_reproduces_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec();
    let ds = s.generate(8).unwrap();
    ds.save(dir.path(), &s.db, &s.q).unwrap();

    let mut mem = RunConfig::synthetic(s, 8);
    mem.preprocess = Preprocess::StandardizeDbStats;
    let from_memory = execute(&mem).unwrap();

    let cfg_text = "db = db.vprd\nq = q.vprd\ndb_labels = db_labels.csv\nq_labels = q_labels.csv\n\
                    gt = pairs\ngt_pairs = gt.csv\nchain = standardize_db_stats\nseed = 8\noutput = run\n";
    fs::write(dir.path().join("run.cfg"), cfg_text).unwrap();
    let cfg = RunConfig::load(&dir.path().join("run.cfg")).unwrap();
    let from_files = run_pipeline(&cfg, cfg.output.as_ref().unwrap()).unwrap();

    assert_eq!(
        from_files.similarity.values(),
        from_memory.similarity.values()
    );
    assert_eq!(from_files.metrics, from_memory.metrics);
    assert_eq!(from_files.manifest.db_hash, from_memory.manifest.db_hash);
    assert!(dir.path().join("run/metrics.csv").exists());
}

#[test]
fn pose_ground_truth_tolerance_audit() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec();
    let ds = s.generate(2).unwrap();
    ds.save(dir.path(), &s.db, &s.q).unwrap();
    let text =
        "db = db.vprd\nq = q.vprd\ngt = poses\ndb_poses = db_poses.csv\nq_poses = q_poses.csv\n\
                gt_mode = poses\ngt_d_max_m = 0.3\ngt_theta_max_rad = 1\nseed = 2\n";
    let cfg = RunConfig::parse(text, dir.path()).unwrap();
    let criteria: Vec<GtCriterion> = [0.3, 0.8, 1.6]
        .iter()
        .map(|&d| GtCriterion::poses(d, 1.0))
        .collect();
    let report = audit_gt_threshold(&cfg, &criteria).unwrap();
    let positives: Vec<usize> = report.variants.iter().map(|v| v.gt_positives).collect();
    assert!(positives.windows(2).all(|w| w[0] <= w[1]), "{positives:?}");
    assert!(report.spread > 0.0);
    for v in &report.variants {
        assert_eq!(v.manifest.gt_mode, Some(GtMode::Poses));
    }
    assert_eq!(
        report.variants[0]
            .manifest
            .diff_lines(&report.variants[1].manifest)
            .len(),
        2
    );
}

#[test]
fn run_manifest_is_complete_and_protocol_audit_pairs() {
    let cfg = RunConfig::synthetic(spec(), 4);
    let out = execute(&cfg).unwrap();
    assert!(validate_manifest(&out.manifest, None).is_empty());
    let report = audit_protocol(&cfg).unwrap();
    let protocols: Vec<_> = report
        .variants
        .iter()
        .map(|v| v.manifest.protocol)
        .collect();
    assert_eq!(
        protocols,
        vec![Some(Protocol::AllMatchings), Some(Protocol::SingleBest)]
    );
    assert_eq!(report.variants[0].metrics(), Some(&out.metrics));
}
