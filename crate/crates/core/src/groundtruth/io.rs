//! CSV files for poses (`id,x,y,theta`), ground-truth pairs
//! (`db_index,query_index`) and query alignments (`query_index,db_index`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::csv_err;
use crate::error::{Result, VprError};
use crate::model::{GroundTruthMatrix, GtCriterion, Pose, PoseTrack};

#[derive(Serialize, Deserialize)]
struct PoseRow {
    id: u64,
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct PairRow {
    db_index: usize,
    query_index: usize,
}

#[derive(Serialize, Deserialize)]
struct AlignRow {
    query_index: usize,
    db_index: usize,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    reader
        .deserialize::<T>()
        .map(|r| r.map_err(|e| csv_err(path, e)))
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| VprError::io(path, e))
}

pub fn load_poses(path: &Path) -> Result<PoseTrack> {
    let rows: Vec<PoseRow> = read_rows(path)?;
    PoseTrack::new(
        rows.into_iter()
            .map(|r| Pose {
                image_id: r.id,
                x: r.x,
                y: r.y,
                theta: r.theta,
            })
            .collect(),
    )
}

pub fn save_poses(track: &PoseTrack, path: &Path) -> Result<()> {
    write_rows(
        path,
        track.entries().iter().map(|p| PoseRow {
            id: p.image_id,
            x: p.x,
            y: p.y,
            theta: p.theta,
        }),
    )
}

/// Positive cells in row-major order.
pub fn save_gt_pairs(gt: &GroundTruthMatrix, path: &Path) -> Result<()> {
    let cols = gt.cols();
    write_rows(
        path,
        gt.values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(k, _)| PairRow {
                db_index: k / cols,
                query_index: k % cols,
            }),
    )
}

/// Reads positive pairs into an `n × m` matrix; the dimensions come from elsewhere.
pub fn load_gt_pairs(
    path: &Path,
    n: usize,
    m: usize,
    criterion: GtCriterion,
) -> Result<GroundTruthMatrix> {
    let rows: Vec<PairRow> = read_rows(path)?;
    let mut values = vec![false; n * m];
    for (k, r) in rows.iter().enumerate() {
        if r.db_index >= n || r.query_index >= m {
            return Err(VprError::Format {
                what: "gt pairs csv",
                line: k + 2,
                message: format!("pair ({}, {}) outside {n}x{m}", r.db_index, r.query_index),
            });
        }
        values[r.db_index * m + r.query_index] = true;
    }
    GroundTruthMatrix::new(n, m, values, criterion)
}

pub fn save_alignment(alignment: &[usize], path: &Path) -> Result<()> {
    write_rows(
        path,
        alignment.iter().enumerate().map(|(j, &i)| AlignRow {
            query_index: j,
            db_index: i,
        }),
    )
}

/// Query indices must be listed in order `0, 1, 2, …`.
pub fn load_alignment(path: &Path) -> Result<Vec<usize>> {
    let rows: Vec<AlignRow> = read_rows(path)?;
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            if r.query_index != k {
                Err(VprError::Format {
                    what: "alignment csv",
                    line: k + 2,
                    message: format!("expected query index {k}, found {}", r.query_index),
                })
            } else {
                Ok(r.db_index)
            }
        })
        .collect()
}
