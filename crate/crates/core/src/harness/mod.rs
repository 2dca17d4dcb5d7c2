//! Pipeline orchestration from a run config and the comparability audits.

pub mod audit;
pub mod config;
pub mod pipeline;

pub use audit::{
    audit_fraction, audit_gt_threshold, audit_protocol, audit_protocol_on, audit_separability,
    audit_structure, AuditKind, AuditReport, Evaluation, Variant, DEFAULT_HISTOGRAM_BINS,
    MIN_SLICE_FRAMES,
};
pub use config::{parse_velocities, DataSource, GtSource, Preprocess, RunConfig};
pub use pipeline::{
    execute, run_pipeline, similarity_for, write_atomically, write_run, Inputs, RunOutput,
};
