use std::collections::BTreeMap;

use rayon::prelude::*;

use super::STD_FLOOR;
use crate::error::{Result, VprError};
use crate::model::DescriptorSet;
use crate::vecmath::{pairwise_sum, pairwise_sum_by};

/// Per-dimension mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub cluster_id: Option<u32>,
}

pub fn compute_stats(set: &DescriptorSet) -> Result<StandardizationStats> {
    if set.count() < 2 {
        return Err(VprError::invalid(format!(
            "standardization needs at least 2 descriptors, got {}",
            set.count()
        )));
    }
    let n = set.count() as f64;
    let (mean, std) = (0..set.dim())
        .into_par_iter()
        .map(|c| {
            let column: Vec<f64> = set.rows().map(|r| r[c]).collect();
            let mean = pairwise_sum(&column) / n;
            let var = pairwise_sum_by(&column, &|x| (x - mean) * (x - mean)) / n;
            (mean, var.sqrt().max(STD_FLOOR))
        })
        .unzip();
    Ok(StandardizationStats {
        mean,
        std,
        cluster_id: None,
    })
}

/// Applies previously computed statistics (e.g. database statistics to a query set).
pub fn apply_stats(set: &DescriptorSet, stats: &StandardizationStats) -> Result<DescriptorSet> {
    if stats.mean.len() != set.dim() || stats.std.len() != set.dim() {
        return Err(VprError::dims(
            "standardization stats",
            set.dim(),
            stats.mean.len(),
        ));
    }
    let data: Vec<f64> = set
        .rows()
        .flat_map(|r| {
            r.iter()
                .zip(stats.mean.iter().zip(&stats.std))
                .map(|(x, (m, s))| (x - m) / s)
        })
        .collect();
    let out = DescriptorSet::new(set.count(), set.dim(), data)?;
    match set.labels() {
        Some(l) => out.with_labels(l.to_vec()),
        None => Ok(out),
    }
}

/// Zero mean, unit population variance per dimension.
pub fn standardize(set: &DescriptorSet) -> Result<(DescriptorSet, StandardizationStats)> {
    let stats = compute_stats(set)?;
    Ok((apply_stats(set, &stats)?, stats))
}

/// Standardizes each label group independently; rows keep their positions.
pub fn standardize_by_cluster(set: &DescriptorSet, labels: &[u32]) -> Result<DescriptorSet> {
    if labels.len() != set.count() {
        return Err(VprError::dims("cluster labels", set.count(), labels.len()));
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if let Some((id, _)) = groups.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(VprError::invalid(format!(
            "cluster {id} has a single member; per-cluster standardization needs at least 2"
        )));
    }
    let mut data = vec![0.0; set.count() * set.dim()];
    for rows in groups.values() {
        let (std_group, _) = standardize(&set.select_rows(rows)?.without_labels())?;
        for (k, &i) in rows.iter().enumerate() {
            data[i * set.dim()..(i + 1) * set.dim()].copy_from_slice(std_group.row(k));
        }
    }
    let out = DescriptorSet::new(set.count(), set.dim(), data)?;
    match set.labels() {
        Some(l) => out.with_labels(l.to_vec()),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn random_set(seed: u64, n: usize, d: usize) -> DescriptorSet {
        let mut rng = Stream::from_seed(seed);
        let data = (0..n * d).map(|_| rng.uniform() * 10.0 - 3.0).collect();
        DescriptorSet::new(n, d, data).unwrap()
    }

    fn max_abs_diff(a: &DescriptorSet, b: &DescriptorSet) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_point_symmetry() {
        let set = DescriptorSet::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let (out, stats) = standardize(&set).unwrap();
        assert_eq!(out.data(), &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(stats.mean, vec![1.0, 1.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
    }

    #[test]
    fn needs_two_rows() {
        let set = DescriptorSet::from_rows(&[vec![1.0]]).unwrap();
        assert!(standardize(&set).is_err());
    }

    #[test]
    fn moments_after_standardization() {
        let (out, _) = standardize(&random_set(3, 50, 8)).unwrap();
        // independent plain-loop recomputation of the moments
        for c in 0..8 {
            let mut sum = 0.0;
            for r in out.rows() {
                sum += r[c];
            }
            let mean = sum / 50.0;
            let mut sq = 0.0;
            for r in out.rows() {
                sq += (r[c] - mean).powi(2);
            }
            assert!(mean.abs() < 1e-12, "mean {mean}");
            assert!((sq / 50.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn idempotent() {
        let (once, _) = standardize(&random_set(4, 30, 5)).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        assert!(max_abs_diff(&once, &twice) < 1e-12);
    }

    #[test]
    fn constant_dimension_uses_floor() {
        let set = DescriptorSet::from_rows(&[vec![5.0, 1.0], vec![5.0, 3.0]]).unwrap();
        let (out, stats) = standardize(&set).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        assert_eq!(out.row(0)[0], 0.0);
    }

    #[test]
    fn cluster_reduction_and_offset_copies() {
        let a = random_set(6, 12, 4);
        let ones = vec![0; 12];
        let (plain, _) = standardize(&a).unwrap();
        assert!(max_abs_diff(&standardize_by_cluster(&a, &ones).unwrap(), &plain) < 1e-15);

        // cluster B is cluster A shifted by a constant vector
        let offset = [100.0, -7.0, 0.5, 3.0];
        let mut rows: Vec<Vec<f64>> = a.rows().map(<[f64]>::to_vec).collect();
        rows.extend(
            a.rows()
                .map(|r| r.iter().zip(offset).map(|(x, o)| x + o).collect::<Vec<_>>()),
        );
        let both = DescriptorSet::from_rows(&rows).unwrap();
        let labels: Vec<u32> = (0..24).map(|i| u32::from(i >= 12)).collect();
        let out = standardize_by_cluster(&both, &labels).unwrap();
        for i in 0..12 {
            for c in 0..4 {
                assert!((out.row(i)[c] - out.row(i + 12)[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pre_standardized_clusters_unchanged() {
        let (a, _) = standardize(&random_set(8, 10, 3)).unwrap();
        let (b, _) = standardize(&random_set(9, 10, 3)).unwrap();
        let rows: Vec<Vec<f64>> = a.rows().chain(b.rows()).map(<[f64]>::to_vec).collect();
        let both = DescriptorSet::from_rows(&rows).unwrap();
        let labels: Vec<u32> = (0..20).map(|i| u32::from(i >= 10)).collect();
        let out = standardize_by_cluster(&both, &labels).unwrap();
        assert!(max_abs_diff(&out, &both) < 1e-12);
    }

    #[test]
    fn singleton_cluster_is_named() {
        let set = random_set(1, 5, 2);
        let err = standardize_by_cluster(&set, &[0, 0, 3, 0, 0]).unwrap_err();
        assert!(err.to_string().contains("cluster 3"), "{err}");
    }

    proptest! {
        #[test]
        fn affine_equivariance(seed in 0u64..1000, a in 0.1f64..50.0, b in -100.0f64..100.0) {
            let x = random_set(seed, 20, 3);
            let shifted = DescriptorSet::new(20, 3, x.data().iter().map(|v| a * v + b).collect()).unwrap();
            let (sx, _) = standardize(&x).unwrap();
            let (sy, _) = standardize(&shifted).unwrap();
            prop_assert!(max_abs_diff(&sx, &sy) < 1e-9);
        }
    }
}
