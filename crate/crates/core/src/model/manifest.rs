//! Machine-readable experiment manifest.
//!
//! A manifest declares every distinguishing property of a place recognition
//! setup (sensors, viewpoint, intended output, scale, domain, appearance
//! change, spatio-temporal structure) plus the exact pipeline choices, so two
//! runs can be diffed line by line.
//!
//! File format: the `key = value` dialect of [`super::kv`], starting with
//! `version = 1`, keys in the fixed order of [`ExperimentManifest::KEYS`].
//! Unset fields are omitted; unknown keys are preserved (after the known ones)
//! and reported by [`validate_manifest`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::kv::KvEntries;
use super::{GtMode, Protocol};
use crate::error::{Result, VprError};
use crate::groundtruth::StructureReport;

pub const MANIFEST_VERSION: u32 = 1;

/// Text form of a manifest field.
pub trait FieldValue: Sized {
    fn render(&self) -> String;
    fn parse_value(s: &str) -> Result<Self>;
}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $kw),+ }
            }
        }

        impl FromStr for $name {
            type Err = VprError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($kw => Ok($name::$variant),)+
                    other => Err(VprError::invalid(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FieldValue for $name {
            fn render(&self) -> String { self.as_str().to_string() }
            fn parse_value(s: &str) -> Result<Self> { s.parse() }
        }
    };
}

keyword_enum!(Sensors {
    VisionOnly => "vision_only",
    VisionPlusOdometry => "vision_plus_odometry",
    MultiSensor => "multi_sensor",
});

keyword_enum!(Knowledge {
    Offline => "offline",
    Online => "online",
    DbKnown => "db_known",
});

keyword_enum!(Exploration {
    ClosedWorld => "closed_world",
    OpenWorld => "open_world",
});

keyword_enum!(ViewpointChange {
    None => "none",
    Small => "small",
    Large => "large",
});

keyword_enum!(PlaceSet {
    Discrete => "discrete",
    Continuous => "continuous",
});

keyword_enum!(Dof {
    Constrained => "constrained",
    Full6Dof => "full_6dof",
});

keyword_enum!(OutputKind {
    Similarities => "similarities",
    Decisions => "decisions",
});

keyword_enum!(AppearanceChange {
    None => "none",
    Mild => "mild",
    Severe => "severe",
});

keyword_enum!(Velocity {
    Constant => "constant",
    Variable => "variable",
});

impl FieldValue for Protocol {
    fn render(&self) -> String {
        self.as_str().to_string()
    }
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
    }
}

impl FieldValue for GtMode {
    fn render(&self) -> String {
        self.as_str().to_string()
    }
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
    }
}

/// Definite matchings, or a candidate list of fixed length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidates {
    Definite,
    TopK(usize),
}

impl FieldValue for Candidates {
    fn render(&self) -> String {
        match self {
            Candidates::Definite => "definite".into(),
            Candidates::TopK(k) => format!("candidates_k:{k}"),
        }
    }
    fn parse_value(s: &str) -> Result<Self> {
        if s == "definite" {
            return Ok(Candidates::Definite);
        }
        match s.strip_prefix("candidates_k:").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => Ok(Candidates::TopK(k)),
            _ => Err(VprError::invalid(format!("bad candidates value `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionModel {
    Constant,
    Discrete(u32),
    Continuous,
}

impl FieldValue for ConditionModel {
    fn render(&self) -> String {
        match self {
            ConditionModel::Constant => "constant".into(),
            ConditionModel::Discrete(k) => format!("discrete:{k}"),
            ConditionModel::Continuous => "continuous".into(),
        }
    }
    fn parse_value(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ConditionModel::Constant),
            "continuous" => Ok(ConditionModel::Continuous),
            _ => match s.strip_prefix("discrete:").map(str::parse::<u32>) {
                Some(Ok(k)) if k >= 1 => Ok(ConditionModel::Discrete(k)),
                _ => Err(VprError::invalid(format!("bad condition model `{s}`"))),
            },
        }
    }
}

/// 64-bit content hash, written as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hash64(pub u64);

impl FieldValue for Hash64 {
    fn render(&self) -> String {
        format!("{:016x}", self.0)
    }
    fn parse_value(s: &str) -> Result<Self> {
        if s.len() != 16 {
            return Err(VprError::invalid(format!(
                "hash `{s}` must have 16 hex digits"
            )));
        }
        u64::from_str_radix(s, 16)
            .map(Hash64)
            .map_err(|_| VprError::invalid(format!("bad hash `{s}`")))
    }
}

impl FieldValue for bool {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
            .map_err(|_| VprError::invalid(format!("expected true|false, got `{s}`")))
    }
}

impl FieldValue for u64 {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
            .map_err(|_| VprError::invalid(format!("expected an unsigned integer, got `{s}`")))
    }
}

impl FieldValue for usize {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
            .map_err(|_| VprError::invalid(format!("expected an unsigned integer, got `{s}`")))
    }
}

impl FieldValue for f64 {
    fn render(&self) -> String {
        // shortest representation that parses back to the same bits
        self.to_string()
    }
    fn parse_value(s: &str) -> Result<Self> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(VprError::invalid(format!(
                "expected a finite number, got `{s}`"
            ))),
        }
    }
}

impl FieldValue for String {
    fn render(&self) -> String {
        self.clone()
    }
    fn parse_value(s: &str) -> Result<Self> {
        Ok(s.to_string())
    }
}

/// Comma-separated tags; the empty list is written as `none`.
impl FieldValue for Vec<String> {
    fn render(&self) -> String {
        if self.is_empty() {
            "none".into()
        } else {
            self.join(",")
        }
    }
    fn parse_value(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Vec::new());
        }
        let tags: Vec<String> = s.split(',').map(|t| t.trim().to_string()).collect();
        if tags.iter().any(String::is_empty) {
            return Err(VprError::invalid(format!("empty tag in list `{s}`")));
        }
        Ok(tags)
    }
}

/// Database and query image counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub db: usize,
    pub query: usize,
}

impl FieldValue for Scale {
    fn render(&self) -> String {
        format!("{},{}", self.db, self.query)
    }
    fn parse_value(s: &str) -> Result<Self> {
        let parsed = s
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        match parsed {
            Some((db, query)) => Ok(Scale { db, query }),
            None => Err(VprError::invalid(format!("expected `n,m`, got `{s}`"))),
        }
    }
}

macro_rules! manifest_struct {
    ($($field:ident : $ty:ty => $label:literal, $required:literal;)+) => {
        /// Every field is optional in memory so that incomplete manifests can be
        /// loaded and reported on; [`validate_manifest`] names the unset ones.
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct ExperimentManifest {
            $(pub $field: Option<$ty>,)+
            /// Whether a `version` line was present.
            pub has_version: bool,
            /// Keys not in [`ExperimentManifest::KEYS`], in file order.
            pub unknown: Vec<(String, String)>,
        }

        impl ExperimentManifest {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),+];

            fn field_lines(&self) -> Vec<(&'static str, Option<String>)> {
                vec![$((stringify!($field), self.$field.as_ref().map(FieldValue::render)),)+]
            }

            fn set_field(&mut self, key: &str, value: &str) -> Result<bool> {
                match key {
                    $(stringify!($field) => {
                        self.$field = Some(<$ty as FieldValue>::parse_value(value).map_err(|e| {
                            VprError::invalid(format!("{}: {e}", stringify!($field)))
                        })?);
                        Ok(true)
                    })+
                    _ => Ok(false),
                }
            }

            /// Copies every field that is set in `other` over `self`.
            pub fn overlay(&mut self, other: &ExperimentManifest) {
                $(if other.$field.is_some() { self.$field = other.$field.clone(); })+
            }

            fn unset_required(&self) -> Vec<&'static str> {
                let mut out = Vec::new();
                $(if $required && self.$field.is_none() { out.push($label); })+
                out
            }
        }
    };
}

manifest_struct! {
    a1_sensors: Sensors => "A1", true;
    a2_knowledge: Knowledge => "A2", true;
    a3_exploration: Exploration => "A3", true;
    a4_extra_knowledge: Vec<String> => "A4", true;
    b1_viewpoint_change: ViewpointChange => "B1", true;
    b2_place_set: PlaceSet => "B2", true;
    b3_dof: Dof => "B3", true;
    c1_matching: Protocol => "C1", true;
    c2_candidates: Candidates => "C2", true;
    c3_output: OutputKind => "C3", true;
    d1_scale: Scale => "D1", true;
    d2_runtime: String => "D2", true;
    d3_storage: String => "D3", true;
    e1_environment: String => "E1", true;
    e2_platform: String => "E2", true;
    f1_appearance_change: AppearanceChange => "F1", true;
    f2_conditions: ConditionModel => "F2", true;
    f3_in_sequence_change: bool => "F3", true;
    f4_condition_knowledge: bool => "F4", true;
    g1_sequences: bool => "G1", true;
    g2_velocity: Velocity => "G2", true;
    g3_loops: bool => "G3", true;
    g4_stops: bool => "G4", true;
    db_hash: Hash64 => "db_hash", true;
    q_hash: Hash64 => "q_hash", true;
    gt_mode: GtMode => "gt_mode", true;
    gt_d_max_m: f64 => "gt_d_max_m", false;
    gt_theta_max_rad: f64 => "gt_theta_max_rad", false;
    gt_index_max: usize => "gt_index_max", false;
    preprocessing_chain: Vec<String> => "preprocessing_chain", true;
    protocol: Protocol => "protocol", true;
    threshold_count: usize => "threshold_count", false;
    seed: u64 => "seed", true;
}

impl ExperimentManifest {
    /// Serializes to the manifest file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.has_version {
            out.push_str(&format!("version = {MANIFEST_VERSION}\n"));
        }
        for (key, value) in self.field_lines() {
            if let Some(v) = value {
                out.push_str(key);
                out.push_str(" = ");
                out.push_str(&v);
                out.push('\n');
            }
        }
        for (k, v) in &self.unknown {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvEntries::parse(text, "manifest")?;
        Self::from_entries(&kv)
    }

    /// Builds a manifest from parsed entries. Keys that are neither manifest
    /// fields nor `version` land in [`ExperimentManifest::unknown`].
    pub fn from_entries(kv: &KvEntries) -> Result<Self> {
        let mut m = ExperimentManifest::default();
        for (key, value) in kv.iter() {
            if key == "version" {
                if value != MANIFEST_VERSION.to_string() {
                    return Err(VprError::invalid(format!(
                        "unsupported manifest version `{value}`"
                    )));
                }
                m.has_version = true;
            } else if !m.set_field(key, value)? {
                m.unknown.push((key.to_string(), value.to_string()));
            }
        }
        Ok(m)
    }

    /// Like [`Self::from_entries`] but only picks up manifest fields, ignoring
    /// every other key (used when manifest lines are embedded in a run config).
    pub fn from_entries_lenient(kv: &KvEntries) -> Result<Self> {
        let mut m = ExperimentManifest {
            has_version: true,
            ..Default::default()
        };
        for (key, value) in kv.iter() {
            m.set_field(key, value)?;
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| VprError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| VprError::io(path, e))
    }

    /// Lines present in exactly one of the two serialized manifests.
    pub fn diff_lines(&self, other: &ExperimentManifest) -> Vec<String> {
        let a = self.to_text();
        let b = other.to_text();
        let a_lines: Vec<&str> = a.lines().collect();
        let b_lines: Vec<&str> = b.lines().collect();
        let mut out: Vec<String> = a_lines
            .iter()
            .filter(|l| !b_lines.contains(l))
            .map(|l| format!("- {l}"))
            .collect();
        out.extend(
            b_lines
                .iter()
                .filter(|l| !a_lines.contains(l))
                .map(|l| format!("+ {l}")),
        );
        out
    }
}

/// Lists every problem with `manifest`; an empty list means complete and
/// consistent. When a ground-truth structure report is supplied, the declared
/// spatio-temporal properties are checked against it.
pub fn validate_manifest(
    manifest: &ExperimentManifest,
    gt_structure: Option<&StructureReport>,
) -> Vec<String> {
    let mut out = Vec::new();
    let m = manifest;

    if !m.has_version {
        out.push("version unset".to_string());
    }
    for (k, _) in &m.unknown {
        out.push(format!("unknown key `{k}`"));
    }
    for label in m.unset_required() {
        out.push(format!("{label} unset"));
    }

    match m.gt_mode {
        Some(GtMode::Poses) => {
            if m.gt_d_max_m.is_none() {
                out.push("gt_d_max_m unset".into());
            }
            if m.gt_theta_max_rad.is_none() {
                out.push("gt_theta_max_rad unset".into());
            }
        }
        Some(GtMode::Indices) if m.gt_index_max.is_none() => out.push("gt_index_max unset".into()),
        _ => {}
    }
    for (value, key) in [
        (m.gt_d_max_m, "gt_d_max_m"),
        (m.gt_theta_max_rad, "gt_theta_max_rad"),
    ] {
        if value.is_some_and(|v| v < 0.0) {
            out.push(format!("{key} negative"));
        }
    }

    if m.c1_matching == Some(Protocol::SingleBest) && m.protocol == Some(Protocol::AllMatchings) {
        out.push("C1 single_best conflicts with protocol all_matchings".into());
    }
    if m.f2_conditions == Some(ConditionModel::Constant) && m.f3_in_sequence_change == Some(true) {
        out.push("F3 contradicts F2: a constant condition cannot change in-sequence".into());
    }
    if m.g1_sequences == Some(false) && m.g2_velocity == Some(Velocity::Constant) {
        out.push("G2 constant velocity declared without sequences (G1)".into());
    }

    if let Some(report) = gt_structure {
        if m.g3_loops == Some(false) && report.loop_queries > 0 {
            out.push("G3 contradicts GT structure".into());
        }
        if m.g4_stops == Some(false)
            && (!report.stop_segments_db.is_empty() || !report.stop_segments_q.is_empty())
        {
            out.push("G4 contradicts GT structure".into());
        }
        if m.a3_exploration == Some(Exploration::ClosedWorld) && report.exploration_queries > 0 {
            out.push("A3 contradicts GT structure".into());
        }
        if let Some(scale) = m.d1_scale {
            if scale.db != report.db_count || scale.query != report.query_count {
                out.push("D1 contradicts GT dimensions".into());
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::groundtruth::structure_report;
    use crate::model::{GroundTruthMatrix, GtCriterion};

    pub(crate) fn complete_manifest() -> ExperimentManifest {
        ExperimentManifest {
            a1_sensors: Some(Sensors::VisionOnly),
            a2_knowledge: Some(Knowledge::Offline),
            a3_exploration: Some(Exploration::ClosedWorld),
            a4_extra_knowledge: Some(vec![]),
            b1_viewpoint_change: Some(ViewpointChange::Small),
            b2_place_set: Some(PlaceSet::Discrete),
            b3_dof: Some(Dof::Constrained),
            c1_matching: Some(Protocol::AllMatchings),
            c2_candidates: Some(Candidates::Definite),
            c3_output: Some(OutputKind::Similarities),
            d1_scale: Some(Scale { db: 6, query: 6 }),
            d2_runtime: Some("ignored".into()),
            d3_storage: Some("ignored".into()),
            e1_environment: Some("desk".into()),
            e2_platform: Some("handheld".into()),
            f1_appearance_change: Some(AppearanceChange::Mild),
            f2_conditions: Some(ConditionModel::Discrete(2)),
            f3_in_sequence_change: Some(false),
            f4_condition_knowledge: Some(false),
            g1_sequences: Some(true),
            g2_velocity: Some(Velocity::Constant),
            g3_loops: Some(false),
            g4_stops: Some(false),
            db_hash: Some(Hash64(0x0123_4567_89ab_cdef)),
            q_hash: Some(Hash64(42)),
            gt_mode: Some(GtMode::Indices),
            gt_d_max_m: None,
            gt_theta_max_rad: None,
            gt_index_max: Some(0),
            preprocessing_chain: Some(vec!["standardize".into(), "measure:cosine".into()]),
            protocol: Some(Protocol::AllMatchings),
            threshold_count: Some(100),
            seed: Some(7),
            has_version: true,
            unknown: vec![],
        }
    }

    #[test]
    fn complete_manifest_has_no_violations() {
        assert!(validate_manifest(&complete_manifest(), None).is_empty());
    }

    #[test]
    fn missing_f3_is_reported() {
        let mut m = complete_manifest();
        m.f3_in_sequence_change = None;
        assert_eq!(validate_manifest(&m, None), vec!["F3 unset".to_string()]);
    }

    #[test]
    fn loops_false_contradicts_revisit_in_gt() {
        // 6x6 GT: query 1 matches db rows 1 and 4 (two non-adjacent runs)
        let gt = GroundTruthMatrix::from_fn(6, 6, GtCriterion::indices(0), |i, j| {
            i == j || (i == 4 && j == 1)
        });
        let report = structure_report(&gt);
        assert_eq!(report.loop_queries, 1);
        assert!(report.stop_segments_db.is_empty() && report.stop_segments_q.is_empty());
        let m = complete_manifest();
        assert_eq!(
            validate_manifest(&m, Some(&report)),
            vec!["G3 contradicts GT structure".to_string()]
        );

        let mut with_loops = m;
        with_loops.g3_loops = Some(true);
        assert!(validate_manifest(&with_loops, Some(&report)).is_empty());
    }

    #[test]
    fn unknown_keys_and_protocol_conflict() {
        let mut text = complete_manifest().to_text();
        text.push_str("colour = blue\n");
        let mut m = ExperimentManifest::parse(&text).unwrap();
        m.c1_matching = Some(Protocol::SingleBest);
        let v = validate_manifest(&m, None);
        assert!(v.contains(&"unknown key `colour`".to_string()));
        assert!(v.iter().any(|s| s.starts_with("C1 single_best conflicts")));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn mode_specific_thresholds_required() {
        let mut m = complete_manifest();
        m.gt_mode = Some(GtMode::Poses);
        let v = validate_manifest(&m, None);
        assert_eq!(
            v,
            vec![
                "gt_d_max_m unset".to_string(),
                "gt_theta_max_rad unset".to_string()
            ]
        );
    }

    #[test]
    fn text_round_trip_is_byte_exact() {
        let mut m = complete_manifest();
        m.gt_d_max_m = Some(0.1 + 0.2);
        m.gt_theta_max_rad = Some(15f64.to_radians());
        m.unknown.push(("extra".into(), "x".into()));
        let first = m.to_text();
        let reparsed = ExperimentManifest::parse(&first).unwrap();
        assert_eq!(reparsed, m);
        assert_eq!(reparsed.to_text(), first);
        assert!(first.starts_with("version = 1\na1_sensors = vision_only\n"));
    }

    #[test]
    fn bad_values_are_parse_errors() {
        assert!(ExperimentManifest::parse("version = 2\n").is_err());
        assert!(ExperimentManifest::parse("a1_sensors = sonar\n").is_err());
        assert!(ExperimentManifest::parse("db_hash = 12\n").is_err());
        assert!(ExperimentManifest::parse("c2_candidates = candidates_k:0\n").is_err());
        assert_eq!(
            ExperimentManifest::parse("f2_conditions = discrete:3\n")
                .unwrap()
                .f2_conditions,
            Some(ConditionModel::Discrete(3))
        );
    }

    #[test]
    fn diff_names_changed_lines() {
        let a = complete_manifest();
        let mut b = a.clone();
        b.gt_index_max = Some(2);
        assert_eq!(
            a.diff_lines(&b),
            vec![
                "- gt_index_max = 0".to_string(),
                "+ gt_index_max = 2".to_string()
            ]
        );
    }
}
