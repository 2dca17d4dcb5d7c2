//! Deterministic evaluation engine for visual place recognition: descriptor
//! handling, similarity matrices, ground truth, precision-recall metrics under
//! both matching protocols, a synthetic dataset generator and the audits that
//! show how evaluation choices move the numbers.

pub mod descriptors;
pub mod error;
pub mod groundtruth;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod similarity;
pub mod synth;
pub mod vecmath;

pub use error::{Result, VprError};
pub use harness::{AuditReport, RunConfig};
pub use model::{
    DescriptorSet, ExperimentManifest, GroundTruthMatrix, GtCriterion, GtMode, Pose, PoseTrack,
    Protocol, SimilarityMatrix, SweepPoint, SweepResult,
};
pub use similarity::Measure;
