//! Visit plans and condition schedules.
//!
//! Plan strings are comma-separated items: `k` (one visit), `a..b` (places
//! `a` up to but excluding `b`), `a..=b` (inclusive), and `k*r` (place `k`
//! repeated `r` times, i.e. a stop). Schedules are written `constant:c`,
//! `switch:from:to:frame` or `drift:from:to`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Result, VprError};

pub fn parse_plan(text: &str) -> Result<Vec<usize>> {
    let bad = |item: &str| VprError::invalid(format!("bad plan item `{item}`"));
    let num = |s: &str, item: &str| s.trim().parse::<usize>().map_err(|_| bad(item));
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..=") {
            out.extend(num(a, item)?..=num(b, item)?);
        } else if let Some((a, b)) = item.split_once("..") {
            out.extend(num(a, item)?..num(b, item)?);
        } else if let Some((k, r)) = item.split_once('*') {
            out.extend(std::iter::repeat_n(num(k, item)?, num(r, item)?));
        } else {
            out.push(num(item, item)?);
        }
    }
    if out.is_empty() {
        return Err(VprError::invalid("empty visit plan"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionSchedule {
    Constant(u32),
    /// Condition `from` before frame `at`, `to` from frame `at` on.
    Switch {
        from: u32,
        to: u32,
        at: usize,
    },
    /// Linear blend from `from` at the first frame to `to` at the last.
    Drift {
        from: u32,
        to: u32,
    },
}

impl ConditionSchedule {
    /// The two blended conditions and the weight of the first at frame `f`
    /// of a traversal of `len` frames.
    pub fn frame(&self, f: usize, len: usize) -> (u32, u32, f64) {
        match *self {
            ConditionSchedule::Constant(c) => (c, c, 1.0),
            ConditionSchedule::Switch { from, to, at } => {
                (from, to, if f < at { 1.0 } else { 0.0 })
            }
            ConditionSchedule::Drift { from, to } => {
                let w = if len <= 1 {
                    1.0
                } else {
                    1.0 - f as f64 / (len - 1) as f64
                };
                (from, to, w)
            }
        }
    }

    /// Label of frame `f`: the first condition while its weight is at least 0.5.
    pub fn label(&self, f: usize, len: usize) -> u32 {
        let (a, b, w) = self.frame(f, len);
        if w >= 0.5 {
            a
        } else {
            b
        }
    }

    pub fn conditions(&self) -> Vec<u32> {
        match *self {
            ConditionSchedule::Constant(c) => vec![c],
            ConditionSchedule::Switch { from, to, .. } | ConditionSchedule::Drift { from, to } => {
                if from == to {
                    vec![from]
                } else {
                    vec![from, to]
                }
            }
        }
    }

    /// True when the appearance changes within the traversal.
    pub fn changes_in_sequence(&self, len: usize) -> bool {
        match *self {
            ConditionSchedule::Constant(_) => false,
            ConditionSchedule::Switch { from, to, at } => from != to && at > 0 && at < len,
            ConditionSchedule::Drift { from, to } => from != to && len > 1,
        }
    }
}

impl fmt::Display for ConditionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionSchedule::Constant(c) => write!(f, "constant:{c}"),
            ConditionSchedule::Switch { from, to, at } => write!(f, "switch:{from}:{to}:{at}"),
            ConditionSchedule::Drift { from, to } => write!(f, "drift:{from}:{to}"),
        }
    }
}

impl FromStr for ConditionSchedule {
    type Err = VprError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || VprError::invalid(format!("bad condition schedule `{s}`"));
        let n = |k: usize| {
            parts
                .get(k)
                .and_then(|p| p.parse::<u32>().ok())
                .ok_or_else(bad)
        };
        match (parts[0], parts.len()) {
            ("constant", 2) => Ok(ConditionSchedule::Constant(n(1)?)),
            ("switch", 4) => Ok(ConditionSchedule::Switch {
                from: n(1)?,
                to: n(2)?,
                at: parts[3].parse().map_err(|_| bad())?,
            }),
            ("drift", 3) => Ok(ConditionSchedule::Drift {
                from: n(1)?,
                to: n(2)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// `frame,place_index,condition_a_weight` rows for a traversal.
pub fn plan_csv(plan: &[usize], schedule: &ConditionSchedule) -> String {
    let mut out = String::from("frame,place_index,condition_a_weight\n");
    for (f, &p) in plan.iter().enumerate() {
        let (_, _, w) = schedule.frame(f, plan.len());
        let _ = writeln!(out, "{f},{p},{w}");
    }
    out
}
