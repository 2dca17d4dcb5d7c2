//! `vpr`: batch front end for the evaluation engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use vpr_core::descriptors::{
    apply_stats, cluster_conditions, compute_stats, describe_images, load_descriptors, load_labels,
    load_pgm, save_descriptors, save_labels, standardize, standardize_by_cluster, DescriptorFormat,
    PixelDescriptorConfig,
};
use vpr_core::groundtruth::{
    gt_from_indices, gt_from_poses, load_alignment, load_gt_pairs, load_poses, save_gt_pairs,
    structure_report,
};
use vpr_core::harness::{
    audit_fraction, audit_gt_threshold, audit_protocol, audit_separability, audit_structure,
    parse_velocities, run_pipeline, write_atomically, AuditReport, RunConfig,
    DEFAULT_HISTOGRAM_BINS,
};
use vpr_core::metrics::{
    curve_csv, evaluate, metrics_csv, pr_curve, sweep_csv, ScalarMetrics, DEFAULT_THRESHOLD_COUNT,
};
use vpr_core::model::kv::KvEntries;
use vpr_core::model::manifest::Scale;
use vpr_core::model::validate_manifest;
use vpr_core::similarity::{
    build_matrix, load_similarity, save_similarity, seq_postprocess, SeqPostConfig,
};
use vpr_core::synth::SynthSpec;
use vpr_core::{ExperimentManifest, GtCriterion, GtMode, Measure, Protocol, VprError};

#[derive(Debug, Parser)]
#[command(
    name = "vpr",
    version,
    about = "Visual place recognition evaluation and comparability audits"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice; overrides a config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a `key = value` world config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pixel descriptors from PGM images, one row per image in argument order.
    Describe {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        /// Patch side for local normalization; 0 disables it.
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Standardize a descriptor file.
    Standardize(StandardizeArgs),
    /// Similarity matrix between database and query descriptors.
    Compare {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long, default_value = "cosine")]
        measure: Measure,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sequence postprocessing of a similarity matrix.
    Seqpost {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        /// Comma-separated list or `linspace:lo:hi:n`.
        #[arg(long)]
        velocities: Option<String>,
        #[arg(long)]
        min_valid_fraction: Option<f64>,
    },
    /// Ground-truth pairs from poses or frame indices.
    Gt(GtArgs),
    /// Evaluate a run config, or a stored similarity matrix against stored ground truth.
    Eval(EvalArgs),
    #[command(subcommand)]
    Audit(AuditCommand),
    #[command(subcommand)]
    Manifest(ManifestCommand),
}

#[derive(Debug, Args)]
struct StandardizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reuse the statistics of this set (e.g. the database) instead of the input's own.
    #[arg(long, conflicts_with_all = ["clusters", "labels"])]
    stats_from: Option<PathBuf>,
    /// Standardize per k-means condition cluster.
    #[arg(long, conflicts_with = "labels")]
    clusters: Option<usize>,
    /// Standardize per given condition label.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Where to write the cluster labels found with `--clusters`.
    #[arg(long, requires = "clusters")]
    labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GtArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires_all = ["q_poses", "d_max", "theta_max"], conflicts_with_all = ["db_count", "index_max"])]
    db_poses: Option<PathBuf>,
    #[arg(long)]
    q_poses: Option<PathBuf>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long, requires_all = ["q_count", "index_max"])]
    db_count: Option<usize>,
    #[arg(long)]
    q_count: Option<usize>,
    #[arg(long)]
    index_max: Option<usize>,
    /// `query_index,db_index` rows; identity when absent.
    #[arg(long, requires = "db_count")]
    alignment: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, conflicts_with_all = ["sim", "gt"])]
    config: Option<PathBuf>,
    #[arg(long, requires = "gt")]
    sim: Option<PathBuf>,
    /// `db_index,query_index` positive pairs.
    #[arg(long, requires = "sim")]
    gt: Option<PathBuf>,
    #[arg(long, default_value = "all_matchings", conflicts_with = "config")]
    protocol: Protocol,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_COUNT, conflicts_with = "config")]
    thresholds: usize,
    /// Run directory; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AuditCommand {
    /// Metrics on contiguous fractions of the trajectory.
    Fraction {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        fractions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics under several ground-truth tolerances.
    Gtdist {
        #[arg(long)]
        config: PathBuf,
        /// `index:K` or `pose:D:THETA`; repeat for each variant.
        #[arg(long = "criterion", required = true)]
        criteria: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// All-matchings versus single-best evaluation.
    Protocol {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity histograms by place identity and condition.
    Separability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loops, stops and exploration queries in the ground truth.
    Structure {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ManifestCommand {
    /// Report every unset or inconsistent field; exits 2 if there are any.
    Validate {
        manifest: PathBuf,
        /// Ground-truth pairs to check the declared structure against.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
}

/// Bad flag combinations detected after parsing.
#[derive(Debug, Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already carry their causes in the message
            if e.is::<VprError>() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen { config, out } => gen(&config, &out, seed.unwrap_or(0)),
        Command::Describe {
            out,
            width,
            height,
            patch,
            images,
        } => {
            let cfg = PixelDescriptorConfig {
                target_width: width,
                target_height: height,
                patch_size: patch,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let imgs = images
                .iter()
                .map(|p| load_pgm(p))
                .collect::<Result<Vec<_>, _>>()?;
            let set = describe_images(&imgs, &cfg)?;
            save_descriptors(&set, &out, DescriptorFormat::for_path(&out))?;
            println!("{} descriptors of dimension {}", set.count(), set.dim());
            Ok(())
        }
        Command::Standardize(a) => standardize_cmd(a, seed.unwrap_or(0)),
        Command::Compare {
            db,
            q,
            measure,
            out,
        } => {
            let s = build_matrix(&load_descriptors(&db)?, &load_descriptors(&q)?, measure)?;
            save_similarity(&s, &out)?;
            println!("{}x{} similarity matrix", s.rows(), s.cols());
            Ok(())
        }
        Command::Seqpost {
            sim,
            out,
            window,
            velocities,
            min_valid_fraction,
        } => {
            let mut cfg = SeqPostConfig::default();
            if let Some(w) = window {
                cfg.window = w;
            }
            if let Some(v) = velocities {
                cfg.velocities = parse_velocities(&v).map_err(|e| usage(e.to_string()))?;
            }
            if let Some(f) = min_valid_fraction {
                cfg.min_valid_fraction = f;
            }
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let s = seq_postprocess(&load_similarity(&sim)?, &cfg)?;
            save_similarity(&s, &out)?;
            Ok(())
        }
        Command::Gt(a) => gt_cmd(a),
        Command::Eval(a) => eval_cmd(a, seed),
        Command::Audit(a) => audit_cmd(a, seed),
        Command::Manifest(ManifestCommand::Validate { manifest, gt }) => {
            validate_cmd(&manifest, gt.as_deref())
        }
    }
}

fn gen(config: &Path, out: &Path, seed: u64) -> anyhow::Result<()> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let kv = KvEntries::parse(&text, "synth config")?;
    let spec = SynthSpec::from_kv(&kv)?;
    let ds = spec.generate(seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    ds.save(out, &spec.db, &spec.q)?;
    println!(
        "{} database and {} query frames",
        ds.db.count(),
        ds.q.count()
    );
    Ok(())
}

fn standardize_cmd(a: StandardizeArgs, seed: u64) -> anyhow::Result<()> {
    let set = load_descriptors(&a.input)?;
    let out = if let Some(from) = &a.stats_from {
        apply_stats(&set, &compute_stats(&load_descriptors(from)?)?)?
    } else if let Some(k) = a.clusters {
        let labels = cluster_conditions(&set, k, seed)?;
        if let Some(p) = &a.labels_out {
            save_labels(&labels, p)?;
        }
        standardize_by_cluster(&set, &labels)?
    } else if let Some(p) = &a.labels {
        standardize_by_cluster(&set, &load_labels(p)?)?
    } else {
        standardize(&set)?.0
    };
    save_descriptors(&out, &a.out, DescriptorFormat::for_path(&a.out))?;
    Ok(())
}

fn gt_cmd(a: GtArgs) -> anyhow::Result<()> {
    let gt = match (&a.db_poses, a.db_count) {
        (Some(db), None) => {
            let (Some(q), Some(d), Some(t)) = (&a.q_poses, a.d_max, a.theta_max) else {
                return Err(usage("--db-poses needs --q-poses, --d-max and --theta-max"));
            };
            let c = GtCriterion::poses(d, t);
            c.validate().map_err(|e| usage(e.to_string()))?;
            gt_from_poses(&load_poses(db)?, &load_poses(q)?, &c)?
        }
        (None, Some(n)) => {
            let (Some(m), Some(k)) = (a.q_count, a.index_max) else {
                return Err(usage("--db-count needs --q-count and --index-max"));
            };
            let mut c = GtCriterion::indices(k);
            if let Some(p) = &a.alignment {
                c = c.with_alignment(load_alignment(p)?);
            }
            gt_from_indices(n, m, &c)?
        }
        _ => {
            return Err(usage(
                "give either --db-poses/--q-poses or --db-count/--q-count",
            ))
        }
    };
    save_gt_pairs(&gt, &a.out)?;
    println!("{} positive pairs", gt.num_positives());
    Ok(())
}

fn print_metrics(m: &ScalarMetrics) {
    println!("auc={}", m.auc);
    println!("max_f1={}", m.max_f1);
    println!("recall_at_100_precision={}", m.recall_at_100_precision);
    println!("extended_precision={}", m.extended_precision);
    if m.degenerate {
        println!("degenerate=true");
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path).map_err(|e| match e {
        VprError::Io { .. } => anyhow!(e),
        other => usage(format!("{}: {other}", path.display())),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn eval_cmd(a: EvalArgs, seed: Option<u64>) -> anyhow::Result<()> {
    if let Some(config) = &a.config {
        let cfg = load_config(config, seed)?;
        let out = a
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .ok_or_else(|| usage("no output directory: pass --out or set `output`"))?;
        let run = run_pipeline(&cfg, &out)?;
        print_metrics(&run.metrics);
        return Ok(());
    }
    let (Some(sim), Some(gt_path)) = (&a.sim, &a.gt) else {
        return Err(usage("eval needs --config, or --sim with --gt"));
    };
    let out = a
        .out
        .clone()
        .ok_or_else(|| usage("--out is required with --sim"))?;
    let s = load_similarity(sim)?;
    let gt = load_gt_pairs(gt_path, s.rows(), s.cols(), GtCriterion::indices(0))?;
    let (sweep, metrics) = evaluate(&s, &gt, a.protocol, a.thresholds)?;
    let curve = pr_curve(&sweep)?;
    let manifest = ExperimentManifest {
        has_version: true,
        d1_scale: Some(Scale {
            db: s.rows(),
            query: s.cols(),
        }),
        preprocessing_chain: Some(vec![
            format!("measure:{}", s.measure_tag),
            s.postprocess_tag.clone(),
        ]),
        protocol: Some(a.protocol),
        threshold_count: Some(a.thresholds),
        seed,
        ..Default::default()
    };
    write_atomically(&out, |dir| {
        manifest.save(&dir.join("manifest.txt"))?;
        for (name, text) in [
            ("sweep.csv", sweep_csv(&sweep)),
            ("curve.csv", curve_csv(&curve)),
            ("metrics.csv", metrics_csv(&metrics, &[])),
        ] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| VprError::Io { path: p, source: e })?;
        }
        Ok(())
    })?;
    print_metrics(&metrics);
    Ok(())
}

fn parse_criterion(s: &str) -> anyhow::Result<GtCriterion> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || {
        usage(format!(
            "bad criterion `{s}`: expected index:K or pose:D:THETA"
        ))
    };
    let c = match parts.as_slice() {
        ["index", k] => GtCriterion::indices(k.parse().map_err(|_| bad())?),
        ["pose", d, t] => {
            GtCriterion::poses(d.parse().map_err(|_| bad())?, t.parse().map_err(|_| bad())?)
        }
        _ => return Err(bad()),
    };
    c.validate().map_err(|_| bad())?;
    Ok(c)
}

fn finish_audit(report: &AuditReport, out: &Path) -> anyhow::Result<()> {
    report.write(out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.report_csv());
    print!("{}", report.summary_csv());
    Ok(())
}

fn audit_cmd(a: AuditCommand, seed: Option<u64>) -> anyhow::Result<()> {
    match a {
        AuditCommand::Fraction {
            config,
            fractions,
            out,
        } => {
            if fractions < 2 {
                return Err(usage("--fractions must be at least 2"));
            }
            finish_audit(
                &audit_fraction(&load_config(&config, seed)?, fractions)?,
                &out,
            )
        }
        AuditCommand::Gtdist {
            config,
            criteria,
            out,
        } => {
            let criteria = criteria
                .iter()
                .map(|c| parse_criterion(c))
                .collect::<anyhow::Result<Vec<_>>>()?;
            if criteria.len() < 2 {
                return Err(usage("give at least two --criterion values"));
            }
            if criteria.iter().any(|c| c.mode != criteria[0].mode) {
                return Err(usage("all criteria must use the same mode"));
            }
            finish_audit(
                &audit_gt_threshold(&load_config(&config, seed)?, &criteria)?,
                &out,
            )
        }
        AuditCommand::Protocol { config, out } => {
            finish_audit(&audit_protocol(&load_config(&config, seed)?)?, &out)
        }
        AuditCommand::Separability { config, bins, out } => {
            if bins < 2 {
                return Err(usage("--bins must be at least 2"));
            }
            let report = audit_separability(&load_config(&config, seed)?, bins)?;
            finish_audit(&report, &out)
        }
        AuditCommand::Structure { config, out } => {
            let report = audit_structure(&load_config(&config, seed)?)?;
            let csv = report.to_csv();
            if let Some(p) = out {
                fs::write(&p, &csv).with_context(|| format!("writing {}", p.display()))?;
            }
            print!("{csv}");
            Ok(())
        }
    }
}

fn validate_cmd(path: &Path, gt: Option<&Path>) -> anyhow::Result<()> {
    let manifest = ExperimentManifest::load(path)?;
    let report = match gt {
        Some(p) => {
            let scale = manifest.d1_scale.ok_or_else(|| {
                usage("--gt needs D1 (d1_scale) in the manifest for the matrix size")
            })?;
            let criterion = match manifest.gt_mode {
                Some(GtMode::Poses) => GtCriterion::poses(
                    manifest.gt_d_max_m.unwrap_or(0.0),
                    manifest.gt_theta_max_rad.unwrap_or(0.0),
                ),
                _ => GtCriterion::indices(manifest.gt_index_max.unwrap_or(0)),
            };
            Some(structure_report(&load_gt_pairs(
                p,
                scale.db,
                scale.query,
                criterion,
            )?))
        }
        None => None,
    };
    let problems = validate_manifest(&manifest, report.as_ref());
    if problems.is_empty() {
        println!("ok");
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(anyhow!(
        "{} problem(s) in {}",
        problems.len(),
        path.display()
    ))
}
