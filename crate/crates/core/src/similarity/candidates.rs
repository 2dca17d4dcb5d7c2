//! Exact candidate selection from a similarity matrix.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Result, VprError};
use crate::model::SimilarityMatrix;

/// Descending similarity, ties to the lower database index.
#[inline]
pub(crate) fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub(crate) fn column_topk(s: &SimilarityMatrix, j: usize, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = s.column(j).enumerate().collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        scored.truncate(k);
    }
    scored.sort_by(|a, b| rank_order(*a, *b));
    scored.into_iter().map(|(i, _)| i).collect()
}

/// For each query, the `k` database indices with the largest similarity,
/// sorted best first; equal similarities are ordered by lower index.
pub fn topk_candidates(s: &SimilarityMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > s.rows() {
        return Err(VprError::invalid(format!(
            "k = {k} must be in 1..={}",
            s.rows()
        )));
    }
    Ok((0..s.cols())
        .into_par_iter()
        .map(|j| column_topk(s, j, k))
        .collect())
}

/// Candidates for query `j`: its own top `k` (none when `k = 0`) united with a
/// window of `±window` database frames around each best match of query `j-1`,
/// clipped to the database. Returned sorted ascending.
pub fn sequence_prior_candidates(
    s: &SimilarityMatrix,
    prev_matches: &[usize],
    j: usize,
    k: usize,
    window: usize,
) -> Result<Vec<usize>> {
    let n = s.rows();
    if j == 0 || j >= s.cols() {
        return Err(VprError::invalid(format!(
            "query index {j} must be in 1..{}",
            s.cols()
        )));
    }
    if k > n {
        return Err(VprError::invalid(format!(
            "k = {k} exceeds database size {n}"
        )));
    }
    let mut out: BTreeSet<usize> = BTreeSet::new();
    if k > 0 {
        out.extend(column_topk(s, j, k));
    }
    for &i in prev_matches {
        if i >= n {
            return Err(VprError::invalid(format!(
                "previous match {i} outside database of {n}"
            )));
        }
        out.extend(i.saturating_sub(window)..=(i + window).min(n - 1));
    }
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn random_s(seed: u64, n: usize, m: usize) -> SimilarityMatrix {
        let mut rng = Stream::from_seed(seed);
        SimilarityMatrix::new(n, m, (0..n * m).map(|_| rng.uniform()).collect(), "test").unwrap()
    }

    #[test]
    fn full_k_sorts_everything() {
        let s = SimilarityMatrix::new(3, 1, vec![0.2, 0.9, 0.5], "t").unwrap();
        assert_eq!(topk_candidates(&s, 3).unwrap(), vec![vec![1, 2, 0]]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let mut v = vec![0.1; 7];
        v[2] = 0.8;
        v[5] = 0.8;
        let s = SimilarityMatrix::new(7, 1, v, "t").unwrap();
        assert_eq!(topk_candidates(&s, 1).unwrap(), vec![vec![2]]);
        assert_eq!(topk_candidates(&s, 3).unwrap(), vec![vec![2, 5, 0]]);
    }

    #[test]
    fn matches_full_sort_oracle() {
        let s = random_s(11, 20, 4);
        let top = topk_candidates(&s, 3).unwrap();
        for (j, found) in top.iter().enumerate() {
            let mut idx: Vec<usize> = (0..20).collect();
            // stable sort by descending value keeps lower indices first on ties
            idx.sort_by(|&a, &b| s.get(b, j).partial_cmp(&s.get(a, j)).unwrap());
            assert_eq!(found, &idx[..3].to_vec());
        }
    }

    #[test]
    fn k_out_of_range() {
        let s = random_s(1, 4, 2);
        assert!(topk_candidates(&s, 0).is_err());
        assert!(topk_candidates(&s, 5).is_err());
    }

    #[test]
    fn pure_prior_and_clipping() {
        let s = random_s(2, 20, 3);
        assert_eq!(
            sequence_prior_candidates(&s, &[10], 1, 0, 2).unwrap(),
            vec![8, 9, 10, 11, 12]
        );
        assert_eq!(
            sequence_prior_candidates(&s, &[0], 1, 0, 2).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(
            sequence_prior_candidates(&s, &[19], 2, 0, 1).unwrap(),
            vec![18, 19]
        );
        assert!(sequence_prior_candidates(&s, &[0], 0, 0, 2).is_err());
    }

    #[test]
    fn union_with_disjoint_topk() {
        // query 1 peaks at rows 0, 1, 2; the prior window sits around row 15
        let mut v = vec![0.0; 20 * 2];
        for (i, val) in [(0, 0.9), (1, 0.8), (2, 0.7)] {
            v[i * 2 + 1] = val;
        }
        let s = SimilarityMatrix::new(20, 2, v, "t").unwrap();
        let w = 2;
        let c = sequence_prior_candidates(&s, &[15], 1, 3, w).unwrap();
        assert_eq!(c.len(), 3 + 2 * w + 1);
        assert_eq!(c, vec![0, 1, 2, 13, 14, 15, 16, 17]);
    }
}
