//! Ground-truth construction from poses or frame indices, and structural
//! analysis of the resulting matrices.

mod io;
mod structure;

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::error::{Result, VprError};
use crate::model::{GroundTruthMatrix, GtCriterion, GtMode, PoseTrack};

pub use io::{
    load_alignment, load_gt_pairs, load_poses, save_alignment, save_gt_pairs, save_poses,
};
pub use structure::{structure_report, StructureReport};

/// Absolute angular difference folded into `[0, π]`. Symmetric in its arguments.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// `GT[i][j]` holds when database pose `i` and query pose `j` lie within
/// `d_max` metres and `theta_max` radians of each other.
pub fn gt_from_poses(db: &PoseTrack, q: &PoseTrack, c: &GtCriterion) -> Result<GroundTruthMatrix> {
    if c.mode != GtMode::Poses {
        return Err(VprError::invalid(
            "gt_from_poses needs a poses-mode criterion",
        ));
    }
    c.validate()?;
    let m = q.len();
    let mut values = vec![false; db.len() * m];
    if m > 0 {
        values
            .par_chunks_mut(m)
            .zip(db.entries())
            .for_each(|(row, a)| {
                for (cell, b) in row.iter_mut().zip(q.entries()) {
                    let (dx, dy) = (a.x - b.x, a.y - b.y);
                    *cell = (dx * dx + dy * dy).sqrt() <= c.d_max
                        && angular_distance(a.theta, b.theta) <= c.theta_max;
                }
            });
    }
    GroundTruthMatrix::new(db.len(), m, values, c.clone())
}

/// `GT[i][j]` holds when `|i - alignment(j)| <= index_max`; the alignment is the
/// identity when absent.
pub fn gt_from_indices(n: usize, m: usize, c: &GtCriterion) -> Result<GroundTruthMatrix> {
    if c.mode != GtMode::Indices {
        return Err(VprError::invalid(
            "gt_from_indices needs an indices-mode criterion",
        ));
    }
    let align: Vec<usize> = match &c.alignment {
        Some(a) => {
            if a.len() != m {
                return Err(VprError::dims("alignment length", m, a.len()));
            }
            if let Some((j, &i)) = a.iter().enumerate().find(|(_, &i)| i >= n) {
                return Err(VprError::invalid(format!(
                    "alignment maps query {j} to database index {i}, outside 0..{n}"
                )));
            }
            a.clone()
        }
        None => (0..m).collect(),
    };
    Ok(GroundTruthMatrix::from_fn(n, m, c.clone(), |i, j| {
        i.abs_diff(align[j]) <= c.index_max
    }))
}
