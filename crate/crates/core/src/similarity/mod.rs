//! Pairwise descriptor comparison and similarity-matrix construction.

mod candidates;
mod io;
mod seqpost;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Result, VprError};
use crate::model::{DescriptorSet, SimilarityMatrix};
use crate::vecmath::{dot, norm_sq};

pub use candidates::{sequence_prior_candidates, topk_candidates};
pub use io::{decode_similarity, encode_similarity, load_similarity, save_similarity};
pub use seqpost::{linspace, seq_postprocess, SeqPostConfig};

/// Similarity measure; every variant returns "higher = more similar".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    Cosine,
    /// Negated Euclidean distance.
    NegEuclidean,
    /// Negated mean absolute error.
    NegMae,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Cosine => "cosine",
            Measure::NegEuclidean => "neg_euclidean",
            Measure::NegMae => "neg_mae",
        }
    }
}

impl FromStr for Measure {
    type Err = VprError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Measure::Cosine),
            "neg_euclidean" => Ok(Measure::NegEuclidean),
            "neg_mae" => Ok(Measure::NegMae),
            other => Err(VprError::invalid(format!("unknown measure `{other}`"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cosine from precomputed squared norms. A zero vector has cosine 0 with everything.
#[inline]
fn cosine_with_norms(a: &[f64], b: &[f64], a_sq: f64, b_sq: f64) -> f64 {
    if a_sq == 0.0 || b_sq == 0.0 {
        return 0.0;
    }
    // sqrt(x * x) == x exactly, so identical vectors score exactly 1
    (dot(a, b) / (a_sq * b_sq).sqrt()).clamp(-1.0, 1.0)
}

#[inline]
fn neg_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    -acc.sqrt()
}

#[inline]
fn neg_mae(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y).abs();
    }
    -(acc / a.len() as f64)
}

pub fn compare(a: &[f64], b: &[f64], measure: Measure) -> Result<f64> {
    if a.len() != b.len() {
        return Err(VprError::dims("compare", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(VprError::invalid("cannot compare empty vectors"));
    }
    Ok(match measure {
        Measure::Cosine => cosine_with_norms(a, b, norm_sq(a), norm_sq(b)),
        Measure::NegEuclidean => neg_euclidean(a, b),
        Measure::NegMae => neg_mae(a, b),
    })
}

/// Exhaustive comparison: `S[i][j] = compare(db_i, q_j)`. Each entry is
/// computed independently with the same kernel as [`compare`], so the result
/// does not depend on how rows are split across workers.
pub fn build_matrix(
    db: &DescriptorSet,
    q: &DescriptorSet,
    measure: Measure,
) -> Result<SimilarityMatrix> {
    if db.dim() != q.dim() {
        return Err(VprError::dims(
            "build_matrix descriptor dims",
            db.dim(),
            q.dim(),
        ));
    }
    let m = q.count();
    let q_sq: Vec<f64> = q.rows().map(norm_sq).collect();
    let mut values = vec![0.0; db.count() * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
        let a = db.row(i);
        match measure {
            Measure::Cosine => {
                let a_sq = norm_sq(a);
                for (j, v) in out.iter_mut().enumerate() {
                    *v = cosine_with_norms(a, q.row(j), a_sq, q_sq[j]);
                }
            }
            Measure::NegEuclidean => {
                for (j, v) in out.iter_mut().enumerate() {
                    *v = neg_euclidean(a, q.row(j));
                }
            }
            Measure::NegMae => {
                for (j, v) in out.iter_mut().enumerate() {
                    *v = neg_mae(a, q.row(j));
                }
            }
        }
    });
    SimilarityMatrix::new(db.count(), m, values, measure.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    const ALL: [Measure; 3] = [Measure::Cosine, Measure::NegEuclidean, Measure::NegMae];

    fn random_set(seed: u64, n: usize, d: usize) -> DescriptorSet {
        let mut rng = Stream::from_seed(seed);
        DescriptorSet::new(n, d, rng.gaussian_vec(n * d)).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let v = [0.3, -2.0, 5.5];
        assert_eq!(compare(&v, &v, Measure::Cosine).unwrap(), 1.0);
        assert_eq!(
            compare(&[1.0, 0.0], &[0.0, 1.0], Measure::Cosine).unwrap(),
            0.0
        );
        let mae = compare(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], Measure::NegMae).unwrap();
        assert!((mae - (-2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(
            compare(&[0.0, 0.0], &[3.0, 4.0], Measure::NegEuclidean).unwrap(),
            -5.0
        );
    }

    #[test]
    fn zero_vector_cosine_is_zero() {
        assert_eq!(
            compare(&[0.0, 0.0], &[1.0, 2.0], Measure::Cosine).unwrap(),
            0.0
        );
        assert_eq!(compare(&[0.0], &[0.0], Measure::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn dim_mismatch() {
        assert!(compare(&[1.0], &[1.0, 2.0], Measure::Cosine).is_err());
        let a = random_set(1, 2, 3);
        let b = random_set(2, 2, 4);
        assert!(build_matrix(&a, &b, Measure::Cosine).is_err());
    }

    #[test]
    fn orthonormal_rows_give_identity() {
        let mut rows = vec![vec![0.0; 4]; 4];
        for (i, r) in rows.iter_mut().enumerate() {
            r[i] = 1.0;
        }
        let set = DescriptorSet::from_rows(&rows).unwrap();
        let s = build_matrix(&set, &set, Measure::Cosine).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(s.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn one_by_one() {
        let a = random_set(3, 1, 5);
        let b = random_set(4, 1, 5);
        for m in ALL {
            let s = build_matrix(&a, &b, m).unwrap();
            assert_eq!(s.values(), &[compare(a.row(0), b.row(0), m).unwrap()]);
            assert_eq!(s.measure_tag, m.as_str());
        }
    }

    #[test]
    fn matrix_equals_double_loop_bitwise() {
        let db = random_set(5, 5, 16);
        let q = random_set(6, 7, 16);
        for m in ALL {
            let s = build_matrix(&db, &q, m).unwrap();
            for i in 0..5 {
                for j in 0..7 {
                    let expected = compare(db.row(i), q.row(j), m).unwrap();
                    assert_eq!(s.get(i, j).to_bits(), expected.to_bits());
                }
            }
        }
    }

    #[test]
    fn identical_across_thread_counts() {
        let db = random_set(7, 40, 32);
        let q = random_set(8, 30, 32);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| build_matrix(&db, &q, Measure::Cosine).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6)) {
            for m in ALL {
                let ab = compare(&a, &b, m).unwrap();
                prop_assert_eq!(ab.to_bits(), compare(&b, &a, m).unwrap().to_bits());
                match m {
                    Measure::Cosine => prop_assert!((-1.0..=1.0).contains(&ab)),
                    _ => prop_assert!(ab <= 0.0),
                }
            }
        }

        #[test]
        fn cosine_scale_invariant(a in prop::collection::vec(0.1f64..10.0, 5), b in prop::collection::vec(-10.0f64..10.0, 5), k in 0.01f64..100.0) {
            let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
            let c0 = compare(&a, &b, Measure::Cosine).unwrap();
            let c1 = compare(&scaled, &b, Measure::Cosine).unwrap();
            prop_assert!((c0 - c1).abs() < 1e-12);
        }
    }
}
