//! Unsupervised condition discovery with seeded k-means.
//!
//! Rows are first put into a canonical order keyed on their values (FNV-1a of
//! the f64 bit patterns, ties broken lexicographically), and seeding plus
//! Lloyd iterations run in that order. The labels therefore depend only on the
//! multiset of rows and the seed: permuting the input permutes the labels.

use std::cmp::Ordering;

use crate::error::{Result, VprError};
use crate::model::{fnv1a_64, DescriptorSet};
use crate::rng::{Purpose, Stream};
use crate::vecmath::pairwise_sum;

pub const MAX_ITERATIONS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn row_key(row: &[f64]) -> u64 {
    let bytes: Vec<u8> = row.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
    fnv1a_64(&bytes)
}

fn canonical_order(set: &DescriptorSet) -> Vec<usize> {
    let keys: Vec<u64> = set.rows().map(row_key).collect();
    let mut order: Vec<usize> = (0..set.count()).collect();
    order.sort_by(|&a, &b| {
        keys[a].cmp(&keys[b]).then_with(|| {
            set.row(a)
                .iter()
                .zip(set.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    order
}

/// Nearest center, ties to the lower center index.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn seed_centers(points: &[&[f64]], k: usize, rng: &mut Stream) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    let mut centers = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();

    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                pick = Some(i);
                if cum > target {
                    break;
                }
            }
            pick.expect("positive total weight has a positive entry")
        } else {
            // fewer distinct points than k: take the next unused row
            chosen.iter().position(|c| !c).expect("k <= count")
        };
        chosen[pick] = true;
        let c = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// k-means labels in `0..k`: k-means++ seeding, then Lloyd iterations until no
/// label changes or [`MAX_ITERATIONS`] is reached. Empty clusters keep their
/// previous center.
pub fn cluster_conditions(set: &DescriptorSet, k: usize, seed: u64) -> Result<Vec<u32>> {
    if k == 0 || k > set.count() {
        return Err(VprError::invalid(format!(
            "k = {k} must be in 1..={} (number of descriptors)",
            set.count()
        )));
    }
    let order = canonical_order(set);
    let points: Vec<&[f64]> = order.iter().map(|&i| set.row(i)).collect();
    let mut rng = Stream::new(seed, Purpose::KMeansSeeding, k as u64);
    let mut centers = seed_centers(&points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();

    for _ in 0..MAX_ITERATIONS {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| *p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            for (d, value) in center.iter_mut().enumerate() {
                let column: Vec<f64> = members.iter().map(|m| m[d]).collect();
                *value = pairwise_sum(&column) / n;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
    }

    let mut out = vec![0u32; set.count()];
    for (canon, &row) in order.iter().enumerate() {
        out[row] = labels[canon] as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn blobs(seed: u64, per_blob: usize, sigma: f64) -> (DescriptorSet, Vec<u32>) {
        let mut rng = Stream::from_seed(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (b, center) in [[0.0, 0.0, 0.0], [10.0 * sigma, 0.0, 0.0]]
            .iter()
            .enumerate()
        {
            for _ in 0..per_blob {
                let g = rng.gaussian_vec(3);
                rows.push(
                    center
                        .iter()
                        .zip(g)
                        .map(|(c, e)| c + sigma * e)
                        .collect::<Vec<_>>(),
                );
                truth.push(b as u32);
            }
        }
        (DescriptorSet::from_rows(&rows).unwrap(), truth)
    }

    /// Fraction of points whose cluster's majority truth label matches their own.
    fn purity(labels: &[u32], truth: &[u32]) -> f64 {
        let clusters: BTreeSet<u32> = labels.iter().copied().collect();
        let mut hits = 0;
        for c in clusters {
            let members: Vec<u32> = labels
                .iter()
                .zip(truth)
                .filter(|(l, _)| **l == c)
                .map(|(_, t)| *t)
                .collect();
            let ones = members.iter().filter(|&&t| t == 1).count();
            hits += ones.max(members.len() - ones);
        }
        hits as f64 / labels.len() as f64
    }

    #[test]
    fn separated_blobs_are_recovered() {
        for seed in 0..5 {
            let (set, truth) = blobs(seed, 10, 1.0);
            let labels = cluster_conditions(&set, 2, seed).unwrap();
            assert_eq!(purity(&labels, &truth), 1.0, "seed {seed}");
            assert_eq!(labels.iter().collect::<BTreeSet<_>>().len(), 2);
        }
    }

    #[test]
    fn degenerate_k() {
        let (set, _) = blobs(1, 5, 1.0);
        assert!(cluster_conditions(&set, 1, 0)
            .unwrap()
            .iter()
            .all(|&l| l == 0));
        let all = cluster_conditions(&set, set.count(), 0).unwrap();
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), set.count());
        assert!(cluster_conditions(&set, set.count() + 1, 0).is_err());
        assert!(cluster_conditions(&set, 0, 0).is_err());
    }

    #[test]
    fn duplicate_rows_with_large_k() {
        let set = DescriptorSet::from_rows(&[vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let labels = cluster_conditions(&set, 3, 9).unwrap();
        assert_eq!(labels[0], labels[1]);
    }

    #[test]
    fn permutation_consistent() {
        let (set, _) = blobs(3, 12, 2.0);
        let labels = cluster_conditions(&set, 3, 11).unwrap();
        let mut rng = Stream::from_seed(99);
        let mut perm: Vec<usize> = (0..set.count()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        let permuted = set.select_rows(&perm).unwrap();
        let plabels = cluster_conditions(&permuted, 3, 11).unwrap();
        for (k, &src) in perm.iter().enumerate() {
            assert_eq!(plabels[k], labels[src]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (set, _) = blobs(4, 15, 3.0);
        assert_eq!(
            cluster_conditions(&set, 4, 1).unwrap(),
            cluster_conditions(&set, 4, 1).unwrap()
        );
    }
}
