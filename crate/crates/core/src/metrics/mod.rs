//! Threshold sweeps and the precision-recall metrics derived from them, under
//! both the all-matchings and the single-best protocol.

mod curve;
mod io;

use rayon::prelude::*;

use crate::error::{Result, VprError};
use crate::model::{GroundTruthMatrix, Protocol, SimilarityMatrix, SweepPoint, SweepResult};
use crate::similarity::topk_candidates;

pub use curve::{
    auc, extended_precision, max_f1, pr_curve, recall_at_100_precision, scalar_metrics, CurvePoint,
    PrCurve, ScalarMetrics,
};
pub use io::{curve_csv, metrics_csv, sweep_csv};

pub const DEFAULT_THRESHOLD_COUNT: usize = 100;

/// Ascending thresholds: the distinct values of `S` when there are at most
/// `count` of them, otherwise `count` evenly spaced values from `min(S)` to
/// `max(S)` inclusive.
pub fn make_thresholds(s: &SimilarityMatrix, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(VprError::invalid(format!(
            "threshold count {count} must be >= 2"
        )));
    }
    let mut distinct: Vec<f64> = s.values().to_vec();
    distinct.sort_unstable_by(f64::total_cmp);
    distinct.dedup_by(|a, b| a == b);
    if distinct.len() <= count {
        return Ok(distinct);
    }
    let (lo, hi) = (distinct[0], distinct[distinct.len() - 1]);
    let step = count - 1;
    Ok((0..count)
        .map(|k| {
            if k == step {
                hi
            } else {
                lo + (hi - lo) * k as f64 / step as f64
            }
        })
        .collect())
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(VprError::invalid("no thresholds"));
    }
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(VprError::invalid("thresholds must be finite"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(VprError::invalid("thresholds must be strictly increasing"));
    }
    Ok(())
}

/// Number of entries of an ascending slice that are `>= t`.
#[inline]
fn count_at_least(sorted: &[f64], t: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|&v| v < t)) as u64
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Every cell is a prediction at threshold `t` when `S >= t`.
pub fn sweep_all_matchings(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    thresholds: &[f64],
) -> Result<SweepResult> {
    gt.check_pair(s)?;
    check_thresholds(thresholds)?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&v, &g) in s.values().iter().zip(gt.values()) {
        if g {
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    if pos.is_empty() {
        return Err(VprError::NoPositives);
    }
    let (pos, neg) = (sorted(pos), sorted(neg));
    let total = pos.len() as u64;
    let points = thresholds
        .par_iter()
        .map(|&t| {
            let tp = count_at_least(&pos, t);
            SweepPoint {
                threshold: t,
                tp,
                fp: count_at_least(&neg, t),
                fn_: total - tp,
            }
        })
        .collect();
    Ok(SweepResult {
        points,
        protocol: Protocol::AllMatchings,
        num_gt_positives: total,
    })
}

/// Index of the largest value in column `j`, ties to the lower row.
pub(crate) fn column_argmax(s: &SimilarityMatrix, j: usize) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in s.column(j).enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Only each query's best database match is a prediction. `num_gt_positives`
/// of the result counts queries that have at least one positive.
pub fn sweep_single_best(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    thresholds: &[f64],
) -> Result<SweepResult> {
    gt.check_pair(s)?;
    check_thresholds(thresholds)?;
    let mut hits = Vec::new();
    let mut misses = Vec::new();
    let mut with_positive = 0u64;
    for j in 0..s.cols() {
        let i = column_argmax(s, j);
        if gt.get(i, j) {
            hits.push(s.get(i, j));
        } else {
            misses.push(s.get(i, j));
        }
        if gt.column_has_positive(j) {
            with_positive += 1;
        }
    }
    if with_positive == 0 {
        return Err(VprError::NoPositives);
    }
    let (hits, misses) = (sorted(hits), sorted(misses));
    let points = thresholds
        .par_iter()
        .map(|&t| {
            let tp = count_at_least(&hits, t);
            SweepPoint {
                threshold: t,
                tp,
                fp: count_at_least(&misses, t),
                fn_: with_positive - tp,
            }
        })
        .collect();
    Ok(SweepResult {
        points,
        protocol: Protocol::SingleBest,
        num_gt_positives: with_positive,
    })
}

pub fn sweep(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    thresholds: &[f64],
    protocol: Protocol,
) -> Result<SweepResult> {
    match protocol {
        Protocol::AllMatchings => sweep_all_matchings(s, gt, thresholds),
        Protocol::SingleBest => sweep_single_best(s, gt, thresholds),
    }
}

/// Thresholds, sweep and scalar metrics in one call.
pub fn evaluate(
    s: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    protocol: Protocol,
    threshold_count: usize,
) -> Result<(SweepResult, ScalarMetrics)> {
    let thresholds = make_thresholds(s, threshold_count)?;
    let result = sweep(s, gt, &thresholds, protocol)?;
    let metrics = scalar_metrics(&result)?;
    Ok((result, metrics))
}

/// Share of queries with at least one positive whose top `k` database
/// candidates contain a positive.
pub fn recall_at_k(s: &SimilarityMatrix, gt: &GroundTruthMatrix, k: usize) -> Result<f64> {
    gt.check_pair(s)?;
    let top = topk_candidates(s, k)?;
    let mut eligible = 0usize;
    let mut found = 0usize;
    for (j, cands) in top.iter().enumerate() {
        if gt.column_has_positive(j) {
            eligible += 1;
            if cands.iter().any(|&i| gt.get(i, j)) {
                found += 1;
            }
        }
    }
    if eligible == 0 {
        return Err(VprError::NoPositives);
    }
    Ok(found as f64 / eligible as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GtCriterion;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn mat(n: usize, m: usize, v: &[f64]) -> SimilarityMatrix {
        SimilarityMatrix::new(n, m, v.to_vec(), "t").unwrap()
    }

    fn gt(n: usize, m: usize, v: &[u8]) -> GroundTruthMatrix {
        GroundTruthMatrix::new(
            n,
            m,
            v.iter().map(|&b| b == 1).collect(),
            GtCriterion::indices(0),
        )
        .unwrap()
    }

    fn random_case(seed: u64) -> (SimilarityMatrix, GroundTruthMatrix) {
        let mut rng = Stream::from_seed(seed);
        let n = 1 + rng.below(30);
        let m = 1 + rng.below(30);
        // coarse values so ties occur
        let s: Vec<f64> = (0..n * m).map(|_| (rng.below(40) as f64) / 40.0).collect();
        let mut g: Vec<bool> = (0..n * m).map(|_| rng.uniform() < 0.15).collect();
        let forced = rng.below(n * m);
        g[forced] = true;
        (
            mat(n, m, &s),
            GroundTruthMatrix::new(n, m, g, GtCriterion::indices(0)).unwrap(),
        )
    }

    /// Cell-by-cell count.
    fn brute_all(s: &SimilarityMatrix, g: &GroundTruthMatrix, t: f64) -> (u64, u64, u64) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..s.rows() {
            for j in 0..s.cols() {
                let pred = s.get(i, j) >= t;
                match (pred, g.get(i, j)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
        }
        (tp, fp, fn_)
    }

    fn brute_single(s: &SimilarityMatrix, g: &GroundTruthMatrix, t: f64) -> (u64, u64, u64) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for j in 0..s.cols() {
            let mut best = 0;
            for i in 1..s.rows() {
                if s.get(i, j) > s.get(best, j) {
                    best = i;
                }
            }
            let pred = s.get(best, j) >= t;
            let hit = pred && g.get(best, j);
            if hit {
                tp += 1;
            } else if pred {
                fp += 1;
            }
            if !hit && (0..s.rows()).any(|i| g.get(i, j)) {
                fn_ += 1;
            }
        }
        (tp, fp, fn_)
    }

    #[test]
    fn thresholds_distinct_path() {
        let s = mat(1, 4, &[0.5, 0.1, 0.9, 0.5]);
        assert_eq!(make_thresholds(&s, 100).unwrap(), vec![0.1, 0.5, 0.9]);
    }

    #[test]
    fn thresholds_even_spacing() {
        let s = mat(1, 6, &[0.0, 0.1, 0.3, 0.6, 0.7, 1.0]);
        assert_eq!(
            make_thresholds(&s, 5).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
    }

    #[test]
    fn thresholds_constant_and_invalid() {
        let s = mat(2, 2, &[0.3; 4]);
        assert_eq!(make_thresholds(&s, 10).unwrap(), vec![0.3]);
        assert!(make_thresholds(&s, 1).is_err());
    }

    #[test]
    fn two_by_two_fixture() {
        let s = mat(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let g = gt(2, 2, &[1, 0, 0, 1]);
        let r = sweep_all_matchings(&s, &g, &[0.15, 0.5]).unwrap();
        assert_eq!((r.points[1].tp, r.points[1].fp, r.points[1].fn_), (2, 0, 0));
        assert_eq!((r.points[0].tp, r.points[0].fp, r.points[0].fn_), (2, 1, 0));
    }

    #[test]
    fn identity_scores_are_perfect() {
        let s = mat(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let g = gt(2, 3, &[1, 0, 0, 0, 1, 1]);
        let r = sweep_all_matchings(&s, &g, &[0.5]).unwrap();
        let p = r.points[0];
        assert_eq!((p.tp, p.fp, p.fn_), (3, 0, 0));
        assert_eq!((p.precision(), p.recall()), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn single_best_wrong_argmax() {
        let s = mat(3, 1, &[0.9, 0.1, 0.2]);
        let g = gt(3, 1, &[0, 1, 0]);
        let r = sweep_single_best(&s, &g, &[0.05]).unwrap();
        assert_eq!((r.points[0].tp, r.points[0].fp, r.points[0].fn_), (0, 1, 1));
    }

    #[test]
    fn single_best_above_max() {
        let s = mat(2, 3, &[0.9, 0.1, 0.4, 0.2, 0.8, 0.3]);
        let g = gt(2, 3, &[1, 0, 0, 0, 1, 0]);
        let r = sweep_single_best(&s, &g, &[2.0]).unwrap();
        assert_eq!((r.points[0].tp, r.points[0].fp, r.points[0].fn_), (0, 0, 2));
        assert_eq!(r.num_gt_positives, 2);
    }

    #[test]
    fn no_positives_error() {
        let s = mat(2, 2, &[0.1; 4]);
        let g = gt(2, 2, &[0; 4]);
        assert!(matches!(
            sweep_all_matchings(&s, &g, &[0.1]),
            Err(VprError::NoPositives)
        ));
        assert!(matches!(
            sweep_single_best(&s, &g, &[0.1]),
            Err(VprError::NoPositives)
        ));
        assert!(matches!(recall_at_k(&s, &g, 1), Err(VprError::NoPositives)));
        assert_eq!(
            sweep_all_matchings(&s, &g, &[0.1]).unwrap_err().to_string(),
            "no positives: precision/recall undefined"
        );
    }

    #[test]
    fn bad_inputs() {
        let s = mat(2, 2, &[0.1; 4]);
        let g = gt(2, 2, &[1, 0, 0, 0]);
        assert!(sweep_all_matchings(&s, &g, &[0.5, 0.2]).is_err());
        assert!(sweep_all_matchings(&s, &g, &[]).is_err());
        assert!(sweep_all_matchings(&s, &gt(1, 4, &[1, 0, 0, 0]), &[0.1]).is_err());
    }

    #[test]
    fn sweeps_match_brute_force() {
        for seed in 0..60 {
            let (s, g) = random_case(seed);
            let th = make_thresholds(&s, 100).unwrap();
            let all = sweep_all_matchings(&s, &g, &th).unwrap();
            let single = sweep_single_best(&s, &g, &th).unwrap();
            for (k, &t) in th.iter().enumerate() {
                let a = all.points[k];
                assert_eq!(
                    (a.tp, a.fp, a.fn_),
                    brute_all(&s, &g, t),
                    "seed {seed} t {t}"
                );
                let b = single.points[k];
                assert_eq!(
                    (b.tp, b.fp, b.fn_),
                    brute_single(&s, &g, t),
                    "seed {seed} t {t}"
                );
            }
        }
    }

    #[test]
    fn recall_at_k_matches_sort_oracle() {
        let mut rng = Stream::from_seed(77);
        let s = mat(10, 6, &(0..60).map(|_| rng.uniform()).collect::<Vec<_>>());
        let g = GroundTruthMatrix::from_fn(10, 6, GtCriterion::indices(0), |i, j| {
            (i * 7 + j * 3) % 5 == 0 && j != 4
        });
        for k in 1..=10 {
            let mut eligible = 0;
            let mut found = 0;
            for j in 0..6 {
                if !(0..10).any(|i| g.get(i, j)) {
                    continue;
                }
                eligible += 1;
                let mut idx: Vec<usize> = (0..10).collect();
                idx.sort_by(|&a, &b| s.get(b, j).partial_cmp(&s.get(a, j)).unwrap());
                if idx[..k].iter().any(|&i| g.get(i, j)) {
                    found += 1;
                }
            }
            assert_eq!(
                recall_at_k(&s, &g, k).unwrap(),
                found as f64 / eligible as f64
            );
        }
        assert_eq!(recall_at_k(&s, &g, 10).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn all_matchings_counts_are_monotone(seed in 0u64..100_000) {
            let (s, g) = random_case(seed);
            let th = make_thresholds(&s, 100).unwrap();
            let r = sweep_all_matchings(&s, &g, &th).unwrap();
            for w in r.points.windows(2) {
                prop_assert!(w[1].tp <= w[0].tp);
                prop_assert!(w[1].fn_ >= w[0].fn_);
                prop_assert_eq!(w[1].tp + w[1].fn_, w[0].tp + w[0].fn_);
            }
        }

        #[test]
        fn recall_at_k_is_monotone_in_k(seed in 0u64..100_000) {
            let (s, g) = random_case(seed);
            let mut prev = 0.0;
            for k in 1..=s.rows() {
                let r = recall_at_k(&s, &g, k).unwrap();
                prop_assert!(r >= prev);
                prev = r;
            }
            prop_assert_eq!(prev, 1.0);
        }

        #[test]
        fn strictly_increasing_transform_changes_nothing(seed in 0u64..100_000) {
            let (s, g) = random_case(seed);
            let f = |x: f64| x * x * x + 2.0 * x;
            let s2 = s.map(f).unwrap();
            let th = make_thresholds(&s, 100).unwrap();
            let th2: Vec<f64> = th.iter().map(|&t| f(t)).collect();
            for protocol in [Protocol::AllMatchings, Protocol::SingleBest] {
                let a = sweep(&s, &g, &th, protocol).unwrap();
                let b = sweep(&s2, &g, &th2, protocol).unwrap();
                let counts = |r: &SweepResult| r.points.iter().map(|p| (p.tp, p.fp, p.fn_)).collect::<Vec<_>>();
                prop_assert_eq!(counts(&a), counts(&b));
                prop_assert_eq!(scalar_metrics(&a).unwrap(), scalar_metrics(&b).unwrap());
            }
            for k in 1..=s.rows() {
                prop_assert_eq!(recall_at_k(&s, &g, k).unwrap(), recall_at_k(&s2, &g, k).unwrap());
            }
        }
    }
}
