//! Run configuration in the manifest's `key = value` dialect.
//!
//! ```text
//! # data: descriptor files, or inline synthetic settings (any `num_places` key)
//! db = db.vprd
//! q = q.vprd
//! chain = standardize_by_cluster:2
//! measure = cosine
//! seqpost = on
//! gt = poses
//! db_poses = db_poses.csv
//! q_poses = q_poses.csv
//! gt_mode = poses
//! gt_d_max_m = 5
//! gt_theta_max_rad = 0.5
//! protocol = all_matchings
//! threshold_count = 100
//! seed = 1
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Manifest fields may be declared too; they describe the data and are copied
//! into the run manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, VprError};
use crate::metrics::DEFAULT_THRESHOLD_COUNT;
use crate::model::kv::KvEntries;
use crate::model::{ExperimentManifest, GtCriterion, GtMode, Protocol};
use crate::similarity::{Measure, SeqPostConfig};
use crate::synth::SynthSpec;

/// Descriptor preprocessing applied before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    None,
    /// Each set standardized with its own statistics.
    Standardize,
    /// Both sets standardized with the database statistics.
    StandardizeDbStats,
    /// Each set split into `k` k-means clusters, each standardized on its own.
    StandardizeByCluster(usize),
}

impl fmt::Display for Preprocess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preprocess::None => f.write_str("none"),
            Preprocess::Standardize => f.write_str("standardize"),
            Preprocess::StandardizeDbStats => f.write_str("standardize_db_stats"),
            Preprocess::StandardizeByCluster(k) => write!(f, "standardize_by_cluster:{k}"),
        }
    }
}

impl FromStr for Preprocess {
    type Err = VprError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Preprocess::None),
            "standardize" => Ok(Preprocess::Standardize),
            "standardize_db_stats" => Ok(Preprocess::StandardizeDbStats),
            other => match other
                .strip_prefix("standardize_by_cluster:")
                .map(str::parse::<usize>)
            {
                Some(Ok(k)) if k >= 1 => Ok(Preprocess::StandardizeByCluster(k)),
                _ => Err(VprError::invalid(format!(
                    "unknown preprocessing step `{other}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        db: PathBuf,
        q: PathBuf,
        db_labels: Option<PathBuf>,
        q_labels: Option<PathBuf>,
    },
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GtSource {
    /// Place identity (indices mode) or generated poses (poses mode) of a synthetic dataset.
    Synth,
    /// Positive pairs listed in a CSV file.
    Pairs(PathBuf),
    Poses {
        db: PathBuf,
        q: PathBuf,
    },
    /// Frame indices, optionally through a query → database alignment file.
    Indices {
        alignment: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub preprocess: Preprocess,
    pub measure: Measure,
    pub seqpost: Option<SeqPostConfig>,
    pub gt_source: GtSource,
    pub criterion: GtCriterion,
    pub protocol: Protocol,
    pub threshold_count: usize,
    pub seed: u64,
    /// Output directory named in the config, if any.
    pub output: Option<PathBuf>,
    /// Manifest fields declared in the config.
    pub declared: ExperimentManifest,
}

const RUN_KEYS: &[&str] = &[
    "db",
    "q",
    "db_labels",
    "q_labels",
    "chain",
    "measure",
    "seqpost",
    "seqpost_window",
    "seqpost_velocities",
    "seqpost_min_valid_fraction",
    "gt",
    "gt_pairs",
    "db_poses",
    "q_poses",
    "alignment",
    "output",
];

/// Comma-separated values, or `linspace:lo:hi:n`.
pub fn parse_velocities(s: &str) -> Result<Vec<f64>> {
    let bad = || VprError::invalid(format!("bad velocity list `{s}`"));
    if let Some(rest) = s.strip_prefix("linspace:") {
        let p: Vec<&str> = rest.split(':').collect();
        if p.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = p[0].parse().map_err(|_| bad())?;
        let hi: f64 = p[1].parse().map_err(|_| bad())?;
        let n: usize = p[2].parse().map_err(|_| bad())?;
        return Ok(crate::similarity::linspace(lo, hi, n));
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

impl RunConfig {
    /// A config for an in-memory synthetic dataset with every other choice at its default.
    pub fn synthetic(spec: SynthSpec, seed: u64) -> Self {
        RunConfig {
            data: DataSource::Synth(spec),
            preprocess: Preprocess::None,
            measure: Measure::Cosine,
            seqpost: None,
            gt_source: GtSource::Synth,
            criterion: GtCriterion::indices(0),
            protocol: Protocol::AllMatchings,
            threshold_count: DEFAULT_THRESHOLD_COUNT,
            seed,
            output: None,
            declared: ExperimentManifest::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| VprError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KvEntries::parse(text, "run config")?;
        for (k, _) in kv.iter() {
            let known = RUN_KEYS.contains(&k)
                || SynthSpec::KEYS.contains(&k)
                || ExperimentManifest::KEYS.contains(&k)
                || k == "version";
            if !known {
                return Err(VprError::invalid(format!("unknown config key `{k}`")));
            }
        }
        let path = |key: &str| kv.get(key).map(|v| base.join(v));
        let require =
            |key: &str| path(key).ok_or_else(|| VprError::invalid(format!("`{key}` missing")));

        let synthetic = kv.get("num_places").is_some();
        let data = if synthetic {
            DataSource::Synth(SynthSpec::from_kv(&kv)?)
        } else {
            DataSource::Files {
                db: require("db")?,
                q: require("q")?,
                db_labels: path("db_labels"),
                q_labels: path("q_labels"),
            }
        };

        let declared = ExperimentManifest::from_entries_lenient(&kv)?;
        let mode = declared.gt_mode.unwrap_or(GtMode::Indices);
        let mut criterion = match mode {
            GtMode::Poses => GtCriterion::poses(
                declared
                    .gt_d_max_m
                    .ok_or_else(|| VprError::invalid("gt_mode = poses needs gt_d_max_m"))?,
                declared
                    .gt_theta_max_rad
                    .ok_or_else(|| VprError::invalid("gt_mode = poses needs gt_theta_max_rad"))?,
            ),
            GtMode::Indices => GtCriterion::indices(declared.gt_index_max.unwrap_or(0)),
        };
        criterion.validate()?;

        let gt_kind = kv
            .get("gt")
            .unwrap_or(if synthetic { "synth" } else { "pairs" });
        let gt_source = match gt_kind {
            "synth" if synthetic => GtSource::Synth,
            "synth" => return Err(VprError::invalid("gt = synth needs a synthetic dataset")),
            "pairs" => GtSource::Pairs(require("gt_pairs")?),
            "poses" => GtSource::Poses {
                db: require("db_poses")?,
                q: require("q_poses")?,
            },
            "indices" => GtSource::Indices {
                alignment: path("alignment"),
            },
            other => return Err(VprError::invalid(format!("unknown gt source `{other}`"))),
        };
        match (&gt_source, mode) {
            (GtSource::Poses { .. }, GtMode::Indices)
            | (GtSource::Indices { .. }, GtMode::Poses) => {
                return Err(VprError::invalid(format!(
                    "gt = {gt_kind} conflicts with gt_mode = {mode}"
                )));
            }
            _ => {}
        }
        if let GtSource::Indices { alignment: Some(_) } = &gt_source {
            // the alignment itself is read when the run starts
            criterion.alignment = Some(vec![]);
        }

        let seqpost = match kv.get("seqpost").unwrap_or("off") {
            "off" => None,
            "on" => {
                let mut sp = SeqPostConfig::default();
                if let Some(w) = kv.get("seqpost_window") {
                    sp.window = w
                        .parse()
                        .map_err(|_| VprError::invalid(format!("bad seqpost_window `{w}`")))?;
                }
                if let Some(v) = kv.get("seqpost_velocities") {
                    sp.velocities = parse_velocities(v)?;
                }
                if let Some(f) = kv.get("seqpost_min_valid_fraction") {
                    sp.min_valid_fraction = f.parse().map_err(|_| {
                        VprError::invalid(format!("bad seqpost_min_valid_fraction `{f}`"))
                    })?;
                }
                sp.validate()?;
                Some(sp)
            }
            other => {
                return Err(VprError::invalid(format!(
                    "seqpost must be on or off, got `{other}`"
                )))
            }
        };

        let threshold_count = declared.threshold_count.unwrap_or(DEFAULT_THRESHOLD_COUNT);
        if threshold_count < 2 {
            return Err(VprError::invalid("threshold_count must be >= 2"));
        }

        Ok(RunConfig {
            data,
            preprocess: kv.get("chain").unwrap_or("none").parse()?,
            measure: kv.get("measure").unwrap_or("cosine").parse()?,
            seqpost,
            gt_source,
            criterion,
            protocol: declared.protocol.unwrap_or(Protocol::AllMatchings),
            threshold_count,
            seed: declared.seed.unwrap_or(0),
            output: path("output"),
            declared,
        })
    }

    /// Ordered preprocessing chain tags recorded in the manifest.
    pub fn chain_tags(&self) -> Vec<String> {
        let mut tags = vec![
            self.preprocess.to_string(),
            format!("measure:{}", self.measure),
        ];
        if let Some(sp) = &self.seqpost {
            tags.push(sp.tag());
        }
        tags
    }
}
