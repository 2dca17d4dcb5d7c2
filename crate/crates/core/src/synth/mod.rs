//! Deterministic synthetic place recognition datasets.
//!
//! Each place has a seeded unit embedding; each appearance condition has a
//! seeded unit vector. A frame showing place `k` under condition vector `c`
//! has descriptor `normalize(e_k + λc·c + λn·η/√d)` with `η` a standard normal
//! vector drawn from the frame's own stream. Places `P..2P` exist only for
//! queries and model unseen places. Ground truth is place identity.

mod histogram;
mod plan;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::descriptors::{save_descriptors, save_labels, DescriptorFormat};
use crate::error::{Result, VprError};
use crate::groundtruth::{save_gt_pairs, save_poses};
use crate::model::kv::KvEntries;
use crate::model::manifest::{
    AppearanceChange, Candidates, ConditionModel, Dof, Exploration, Hash64, Knowledge, OutputKind,
    PlaceSet, Scale, Sensors, Velocity, ViewpointChange,
};
use crate::model::{
    DescriptorSet, ExperimentManifest, GroundTruthMatrix, GtCriterion, GtMode, Pose, PoseTrack,
    Protocol,
};
use crate::rng::{Purpose, Stream};
use crate::vecmath::normalize_in_place;

pub use histogram::{conditional_histograms, histograms_csv, HistKey, Histogram};
pub use plan::{parse_plan, plan_csv, ConditionSchedule};

/// Norm of the perturbation separating the two members of an aliased pair.
pub const ALIAS_PERTURBATION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub num_places: usize,
    pub dim: usize,
    /// Metres between consecutive places along the route.
    pub place_spacing: f64,
    /// Places `2k` and `2k+1` for `k < aliasing_pairs` look almost identical.
    pub aliasing_pairs: usize,
    pub condition_strength: f64,
    pub noise_strength: f64,
    /// Standard deviation in metres of the pose offset of each frame.
    pub viewpoint_jitter: f64,
}

impl WorldConfig {
    pub fn new(num_places: usize) -> Self {
        WorldConfig {
            num_places,
            dim: 128,
            place_spacing: 1.0,
            aliasing_pairs: 0,
            condition_strength: 0.0,
            noise_strength: 0.0,
            viewpoint_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_places < 2 {
            return Err(VprError::invalid("need at least 2 places"));
        }
        if self.dim == 0 {
            return Err(VprError::invalid("descriptor dimension must be positive"));
        }
        if 2 * self.aliasing_pairs > self.num_places {
            return Err(VprError::invalid(format!(
                "{} aliasing pairs need {} places",
                self.aliasing_pairs,
                2 * self.aliasing_pairs
            )));
        }
        for (name, v) in [
            ("condition_strength", self.condition_strength),
            ("noise_strength", self.noise_strength),
            ("viewpoint_jitter", self.viewpoint_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(VprError::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.place_spacing.is_finite() && self.place_spacing > 0.0) {
            return Err(VprError::invalid("place_spacing must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalConfig {
    /// Place shown by each frame, in order.
    pub visit_plan: Vec<usize>,
    pub schedule: ConditionSchedule,
    /// Noise multiplier reached at the last frame, rising linearly from 1.
    pub noise_ramp: f64,
}

impl TraversalConfig {
    pub fn new(visit_plan: Vec<usize>, schedule: ConditionSchedule) -> Self {
        TraversalConfig {
            visit_plan,
            schedule,
            noise_ramp: 1.0,
        }
    }

    pub fn with_noise_ramp(mut self, ramp: f64) -> Self {
        self.noise_ramp = ramp;
        self
    }

    pub fn len(&self) -> usize {
        self.visit_plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visit_plan.is_empty()
    }

    fn validate(&self, what: &str, max_place: usize) -> Result<()> {
        if self.visit_plan.is_empty() {
            return Err(VprError::invalid(format!("{what} plan is empty")));
        }
        if let Some((f, &p)) = self
            .visit_plan
            .iter()
            .enumerate()
            .find(|(_, &p)| p >= max_place)
        {
            return Err(VprError::invalid(format!(
                "{what} frame {f} visits place {p}, outside 0..{max_place}"
            )));
        }
        if let ConditionSchedule::Switch { at, .. } = self.schedule {
            if at > self.len() {
                return Err(VprError::invalid(format!(
                    "{what} switch frame {at} beyond {} frames",
                    self.len()
                )));
            }
        }
        if !(self.noise_ramp.is_finite() && self.noise_ramp > 0.0) {
            return Err(VprError::invalid(format!(
                "{what} noise_ramp must be positive"
            )));
        }
        Ok(())
    }

    fn noise_at(&self, base: f64, f: usize) -> f64 {
        if self.len() <= 1 {
            return base;
        }
        base * (1.0 + (self.noise_ramp - 1.0) * f as f64 / (self.len() - 1) as f64)
    }

    pub fn labels(&self) -> Vec<u32> {
        (0..self.len())
            .map(|f| self.schedule.label(f, self.len()))
            .collect()
    }

    pub fn plan_csv(&self) -> String {
        plan_csv(&self.visit_plan, &self.schedule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    /// Database descriptors, labelled with each frame's dominant condition.
    pub db: DescriptorSet,
    pub q: DescriptorSet,
    pub db_poses: PoseTrack,
    pub q_poses: PoseTrack,
    pub db_places: Vec<usize>,
    pub q_places: Vec<usize>,
    pub gt: GroundTruthMatrix,
    pub manifest: ExperimentManifest,
}

impl SynthDataset {
    /// Writes descriptors (text, exact), labels, poses, ground-truth pairs and
    /// the manifest into `dir`, which must exist.
    pub fn save(&self, dir: &Path, db_t: &TraversalConfig, q_t: &TraversalConfig) -> Result<()> {
        save_descriptors(&self.db, &dir.join("db.vprd"), DescriptorFormat::Text)?;
        save_descriptors(&self.q, &dir.join("q.vprd"), DescriptorFormat::Text)?;
        save_labels(
            self.db.labels().unwrap_or_default(),
            &dir.join("db_labels.csv"),
        )?;
        save_labels(
            self.q.labels().unwrap_or_default(),
            &dir.join("q_labels.csv"),
        )?;
        save_poses(&self.db_poses, &dir.join("db_poses.csv"))?;
        save_poses(&self.q_poses, &dir.join("q_poses.csv"))?;
        save_gt_pairs(&self.gt, &dir.join("gt.csv"))?;
        for (name, t) in [("db_plan.csv", db_t), ("q_plan.csv", q_t)] {
            let path = dir.join(name);
            fs::write(&path, t.plan_csv()).map_err(|e| VprError::io(path, e))?;
        }
        self.manifest.save(&dir.join("manifest.txt"))
    }
}

struct Embeddings<'a> {
    world: &'a WorldConfig,
    seed: u64,
    places: HashMap<usize, Vec<f64>>,
    conditions: HashMap<u32, Vec<f64>>,
}

impl Embeddings<'_> {
    fn place(&mut self, k: usize) -> &[f64] {
        let (world, seed) = (self.world, self.seed);
        self.places.entry(k).or_insert_with(|| {
            let d = world.dim;
            let aliased = k < world.num_places && k % 2 == 1 && k / 2 < world.aliasing_pairs;
            if aliased {
                let mut e =
                    Stream::new(seed, Purpose::PlaceEmbedding, (k - 1) as u64).unit_vector(d);
                let u =
                    Stream::new(seed, Purpose::AliasPerturbation, (k / 2) as u64).unit_vector(d);
                for (x, du) in e.iter_mut().zip(&u) {
                    *x += ALIAS_PERTURBATION * du;
                }
                normalize_in_place(&mut e);
                e
            } else {
                Stream::new(seed, Purpose::PlaceEmbedding, k as u64).unit_vector(d)
            }
        })
    }

    fn condition(&mut self, c: u32) -> Vec<f64> {
        let (d, seed) = (self.world.dim, self.seed);
        self.conditions
            .entry(c)
            .or_insert_with(|| {
                Stream::new(seed, Purpose::ConditionVector, u64::from(c)).unit_vector(d)
            })
            .clone()
    }

    /// Linear blend of two condition vectors, renormalized.
    fn blended(&mut self, a: u32, b: u32, w: f64) -> Vec<f64> {
        if w >= 1.0 || a == b {
            return self.condition(a);
        }
        if w <= 0.0 {
            return self.condition(b);
        }
        let ca = self.condition(a);
        let cb = self.condition(b);
        let mut v: Vec<f64> = ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| w * x + (1.0 - w) * y)
            .collect();
        normalize_in_place(&mut v);
        v
    }
}

fn traverse(
    world: &WorldConfig,
    t: &TraversalConfig,
    emb: &mut Embeddings<'_>,
    frame_purpose: Purpose,
    pose_purpose: Purpose,
) -> Result<(DescriptorSet, PoseTrack)> {
    let d = world.dim;
    let len = t.len();
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut data = Vec::with_capacity(len * d);
    let mut poses = Vec::with_capacity(len);
    for (f, &k) in t.visit_plan.iter().enumerate() {
        let (a, b, w) = t.schedule.frame(f, len);
        let c = emb.blended(a, b, w);
        let lambda_n = t.noise_at(world.noise_strength, f);
        let eta = Stream::new(emb.seed, frame_purpose, f as u64).gaussian_vec(d);
        let e = emb.place(k);
        let mut v: Vec<f64> = (0..d)
            .map(|i| e[i] + world.condition_strength * c[i] + lambda_n * eta[i] * inv_sqrt_d)
            .collect();
        normalize_in_place(&mut v);
        data.extend_from_slice(&v);

        let (gx, gy) = Stream::new(emb.seed, pose_purpose, f as u64).gaussian_pair();
        poses.push(Pose {
            image_id: f as u64,
            x: k as f64 * world.place_spacing + world.viewpoint_jitter * gx,
            y: world.viewpoint_jitter * gy + 0.0,
            theta: 0.0,
        });
    }
    let set = DescriptorSet::new(len, d, data)?.with_labels(t.labels())?;
    Ok((set, PoseTrack::new(poses)?))
}

fn has_stop(plan: &[usize]) -> bool {
    plan.windows(2).any(|w| w[0] == w[1])
}

/// A place visited in two separate runs of frames.
fn has_revisit(plan: &[usize]) -> bool {
    let mut seen = BTreeSet::new();
    let mut prev = None;
    for &p in plan {
        if prev != Some(p) && !seen.insert(p) {
            return true;
        }
        prev = Some(p);
    }
    false
}

/// Non-negative place steps between frames; backward jumps (loop restarts) are ignored.
fn forward_steps(plan: &[usize]) -> impl Iterator<Item = usize> + '_ {
    plan.windows(2)
        .filter(|w| w[1] >= w[0])
        .map(|w| w[1] - w[0])
}

fn derive_manifest(
    world: &WorldConfig,
    db_t: &TraversalConfig,
    q_t: &TraversalConfig,
    db: &DescriptorSet,
    q: &DescriptorSet,
    seed: u64,
) -> ExperimentManifest {
    let db_places: BTreeSet<usize> = db_t.visit_plan.iter().copied().collect();
    let open_world = q_t.visit_plan.iter().any(|p| !db_places.contains(p));

    let mut conditions: BTreeSet<u32> = db_t.schedule.conditions().into_iter().collect();
    conditions.extend(q_t.schedule.conditions());
    let drifting = [&db_t.schedule, &q_t.schedule]
        .iter()
        .any(|s| matches!(s, ConditionSchedule::Drift { from, to } if from != to));
    let f2 = if drifting {
        ConditionModel::Continuous
    } else if conditions.len() == 1 {
        ConditionModel::Constant
    } else {
        ConditionModel::Discrete(conditions.len() as u32)
    };
    let f1 = if world.condition_strength == 0.0 || conditions.len() == 1 {
        AppearanceChange::None
    } else if world.condition_strength >= 1.0 {
        AppearanceChange::Severe
    } else {
        AppearanceChange::Mild
    };

    let steps: BTreeSet<usize> = forward_steps(&db_t.visit_plan)
        .chain(forward_steps(&q_t.visit_plan))
        .collect();

    ExperimentManifest {
        a1_sensors: Some(Sensors::VisionOnly),
        a2_knowledge: Some(Knowledge::Offline),
        a3_exploration: Some(if open_world {
            Exploration::OpenWorld
        } else {
            Exploration::ClosedWorld
        }),
        a4_extra_knowledge: Some(vec![]),
        b1_viewpoint_change: Some(if world.viewpoint_jitter > 0.0 {
            ViewpointChange::Small
        } else {
            ViewpointChange::None
        }),
        b2_place_set: Some(PlaceSet::Discrete),
        b3_dof: Some(Dof::Constrained),
        c1_matching: Some(Protocol::AllMatchings),
        c2_candidates: Some(Candidates::Definite),
        c3_output: Some(OutputKind::Similarities),
        d1_scale: Some(Scale {
            db: db.count(),
            query: q.count(),
        }),
        d2_runtime: Some("unspecified".into()),
        d3_storage: Some("unspecified".into()),
        e1_environment: Some("synthetic".into()),
        e2_platform: Some("synthetic".into()),
        f1_appearance_change: Some(f1),
        f2_conditions: Some(f2),
        f3_in_sequence_change: Some(
            db_t.schedule.changes_in_sequence(db_t.len())
                || q_t.schedule.changes_in_sequence(q_t.len()),
        ),
        f4_condition_knowledge: Some(true),
        g1_sequences: Some(true),
        g2_velocity: Some(if steps.len() <= 1 {
            Velocity::Constant
        } else {
            Velocity::Variable
        }),
        g3_loops: Some(has_revisit(&db_t.visit_plan) || has_revisit(&q_t.visit_plan)),
        g4_stops: Some(has_stop(&db_t.visit_plan) || has_stop(&q_t.visit_plan)),
        db_hash: Some(Hash64(db.source_hash())),
        q_hash: Some(Hash64(q.source_hash())),
        gt_mode: Some(GtMode::Indices),
        gt_d_max_m: None,
        gt_theta_max_rad: None,
        gt_index_max: Some(0),
        preprocessing_chain: Some(vec!["none".into()]),
        protocol: Some(Protocol::AllMatchings),
        threshold_count: Some(crate::metrics::DEFAULT_THRESHOLD_COUNT),
        seed: Some(seed),
        has_version: true,
        unknown: vec![],
    }
}

/// Builds the dataset. Database plans may visit places `0..P`, query plans
/// `0..2P`; everything is a pure function of the configs and `seed`.
pub fn generate(
    world: &WorldConfig,
    db_t: &TraversalConfig,
    q_t: &TraversalConfig,
    seed: u64,
) -> Result<SynthDataset> {
    world.validate()?;
    db_t.validate("database", world.num_places)?;
    q_t.validate("query", 2 * world.num_places)?;

    let mut emb = Embeddings {
        world,
        seed,
        places: HashMap::new(),
        conditions: HashMap::new(),
    };
    let (db, db_poses) = traverse(
        world,
        db_t,
        &mut emb,
        Purpose::DatabaseFrame,
        Purpose::DatabasePose,
    )?;
    let (q, q_poses) = traverse(
        world,
        q_t,
        &mut emb,
        Purpose::QueryFrame,
        Purpose::QueryPose,
    )?;

    let gt = GroundTruthMatrix::from_fn(db.count(), q.count(), GtCriterion::indices(0), |i, j| {
        db_t.visit_plan[i] == q_t.visit_plan[j]
    });
    let manifest = derive_manifest(world, db_t, q_t, &db, &q, seed);
    Ok(SynthDataset {
        db,
        q,
        db_poses,
        q_poses,
        db_places: db_t.visit_plan.clone(),
        q_places: q_t.visit_plan.clone(),
        gt,
        manifest,
    })
}

/// World and traversal settings as read from a `key = value` config.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub world: WorldConfig,
    pub db: TraversalConfig,
    pub q: TraversalConfig,
}

impl SynthSpec {
    pub const KEYS: &'static [&'static str] = &[
        "num_places",
        "dim",
        "place_spacing",
        "aliasing_pairs",
        "condition_strength",
        "noise_strength",
        "viewpoint_jitter",
        "db_plan",
        "q_plan",
        "db_schedule",
        "q_schedule",
        "db_noise_ramp",
        "q_noise_ramp",
    ];

    /// Reads the keys in [`Self::KEYS`] and ignores all others. `num_places`
    /// is required; plans default to visiting every place once in order and
    /// schedules to `constant:0`.
    pub fn from_kv(kv: &KvEntries) -> Result<Self> {
        fn get<T: std::str::FromStr>(kv: &KvEntries, key: &str, default: T) -> Result<T> {
            match kv.get(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| VprError::invalid(format!("bad value `{v}` for `{key}`"))),
                None => Ok(default),
            }
        }
        let num_places: usize = kv
            .get("num_places")
            .ok_or_else(|| VprError::invalid("num_places missing"))?
            .parse()
            .map_err(|_| VprError::invalid("bad num_places"))?;
        let defaults = WorldConfig::new(num_places);
        let world = WorldConfig {
            num_places,
            dim: get(kv, "dim", defaults.dim)?,
            place_spacing: get(kv, "place_spacing", defaults.place_spacing)?,
            aliasing_pairs: get(kv, "aliasing_pairs", 0)?,
            condition_strength: get(kv, "condition_strength", 0.0)?,
            noise_strength: get(kv, "noise_strength", 0.0)?,
            viewpoint_jitter: get(kv, "viewpoint_jitter", 0.0)?,
        };
        let traversal = |prefix: &str| -> Result<TraversalConfig> {
            let plan = match kv.get(&format!("{prefix}_plan")) {
                Some(p) => parse_plan(p)?,
                None => (0..num_places).collect(),
            };
            let schedule = match kv.get(&format!("{prefix}_schedule")) {
                Some(s) => s.parse()?,
                None => ConditionSchedule::Constant(0),
            };
            Ok(TraversalConfig::new(plan, schedule).with_noise_ramp(get(
                kv,
                &format!("{prefix}_noise_ramp"),
                1.0,
            )?))
        };
        Ok(SynthSpec {
            world,
            db: traversal("db")?,
            q: traversal("q")?,
        })
    }

    pub fn generate(&self, seed: u64) -> Result<SynthDataset> {
        generate(&self.world, &self.db, &self.q, seed)
    }
}
