//! Sequence-based postprocessing: average similarities along short
//! constant-velocity diagonals and keep the best velocity.

use rayon::prelude::*;

use crate::error::{Result, VprError};
use crate::model::SimilarityMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SeqPostConfig {
    /// Odd number of query frames per window.
    pub window: usize,
    /// Database frames advanced per query frame.
    pub velocities: Vec<f64>,
    /// Minimum in-bounds share of the window for a velocity to count.
    pub min_valid_fraction: f64,
}

impl Default for SeqPostConfig {
    fn default() -> Self {
        SeqPostConfig {
            window: 11,
            velocities: linspace(0.8, 1.25, 10),
            min_valid_fraction: 0.5,
        }
    }
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

impl SeqPostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(VprError::invalid(format!(
                "window length {} must be odd and >= 1",
                self.window
            )));
        }
        if self.velocities.is_empty()
            || self.velocities.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(VprError::invalid(
                "velocities must be non-empty, finite and positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return Err(VprError::invalid("min_valid_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Postprocess tag recorded on the output matrix and in manifests.
    pub fn tag(&self) -> String {
        let v: Vec<String> = self.velocities.iter().map(f64::to_string).collect();
        format!(
            "seqpost:L{}:v{}:f{}:plain_mean",
            self.window,
            v.join("/"),
            self.min_valid_fraction
        )
    }
}

/// `S'[i][j]` is the best (over velocities `v`) mean of `S[i + round(v·t)][j + t]`
/// for `t` in `-(L-1)/2 ..= (L-1)/2`, using only in-bounds terms. Velocities
/// whose in-bounds share is below `min_valid_fraction` are skipped; if all are
/// skipped the cell keeps its input value.
pub fn seq_postprocess(s: &SimilarityMatrix, cfg: &SeqPostConfig) -> Result<SimilarityMatrix> {
    cfg.validate()?;
    let (n, m) = (s.rows() as isize, s.cols() as isize);
    let half = (cfg.window / 2) as isize;
    let offsets: Vec<Vec<isize>> = cfg
        .velocities
        .iter()
        .map(|v| {
            (-half..=half)
                .map(|t| (v * t as f64).round() as isize)
                .collect()
        })
        .collect();
    let window = cfg.window as f64;

    let mut values = vec![0.0; s.values().len()];
    values
        .par_chunks_mut(s.cols())
        .enumerate()
        .for_each(|(i, out)| {
            let i = i as isize;
            for (j, cell) in out.iter_mut().enumerate() {
                let j = j as isize;
                let mut best: Option<f64> = None;
                for offs in &offsets {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for (t, &di) in (-half..=half).zip(offs) {
                        let (ii, jj) = (i + di, j + t);
                        if ii < 0 || ii >= n || jj < 0 || jj >= m {
                            continue;
                        }
                        let v = s.get(ii as usize, jj as usize);
                        sum += v;
                        count += 1;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    if count == 0 || (count as f64) / window < cfg.min_valid_fraction {
                        continue;
                    }
                    // a rounded float mean can stray just outside its terms' range
                    let mean = (sum / count as f64).clamp(lo, hi);
                    best = Some(best.map_or(mean, |b: f64| b.max(mean)));
                }
                *cell = best.unwrap_or_else(|| s.get(i as usize, j as usize));
            }
        });

    let mut out = SimilarityMatrix::new(s.rows(), s.cols(), values, s.measure_tag.clone())?;
    out.postprocess_tag = if s.postprocess_tag == "none" {
        cfg.tag()
    } else {
        format!("{}+{}", s.postprocess_tag, cfg.tag())
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn random_s(seed: u64, n: usize, m: usize) -> SimilarityMatrix {
        let mut rng = Stream::from_seed(seed);
        SimilarityMatrix::new(n, m, (0..n * m).map(|_| rng.uniform()).collect(), "t").unwrap()
    }

    #[test]
    fn default_grid() {
        let cfg = SeqPostConfig::default();
        assert_eq!(cfg.velocities.len(), 10);
        assert_eq!(cfg.velocities[0], 0.8);
        assert_eq!(cfg.velocities[9], 1.25);
        assert!(cfg.velocities.contains(&1.0));
        cfg.validate().unwrap();
    }

    #[test]
    fn unit_window_is_identity() {
        let s = random_s(1, 6, 9);
        let cfg = SeqPostConfig {
            window: 1,
            ..Default::default()
        };
        assert_eq!(seq_postprocess(&s, &cfg).unwrap().values(), s.values());
    }

    #[test]
    fn constant_matrix_is_preserved() {
        let s = SimilarityMatrix::new(7, 5, vec![0.1; 35], "t").unwrap();
        let out = seq_postprocess(&s, &SeqPostConfig::default()).unwrap();
        assert_eq!(out.values(), s.values());
    }

    #[test]
    fn unit_diagonal_survives() {
        let n = 9;
        let s = SimilarityMatrix::new(
            n,
            n,
            (0..n * n)
                .map(|k| f64::from(u8::from(k / n == k % n)))
                .collect(),
            "t",
        )
        .unwrap();
        let cfg = SeqPostConfig {
            window: 5,
            velocities: vec![0.8, 1.0, 1.25],
            min_valid_fraction: 0.5,
        };
        let out = seq_postprocess(&s, &cfg).unwrap();
        // independent enumeration of every window: a cell reaches 1 only if all
        // in-bounds terms of some qualifying velocity lie on the diagonal
        for i in 0..n as isize {
            for j in 0..n as isize {
                let mut expect: Option<f64> = None;
                for &v in &cfg.velocities {
                    let terms: Vec<f64> = (-2isize..=2)
                        .filter_map(|t| {
                            let ii = i + (v * t as f64).round() as isize;
                            let jj = j + t;
                            (ii >= 0 && ii < n as isize && jj >= 0 && jj < n as isize)
                                .then_some(if ii == jj { 1.0 } else { 0.0 })
                        })
                        .collect();
                    if terms.len() * 2 >= 5 {
                        let mean = terms.iter().sum::<f64>() / terms.len() as f64;
                        expect = Some(expect.map_or(mean, |e: f64| e.max(mean)));
                    }
                }
                let got = out.get(i as usize, j as usize);
                assert_eq!(got, expect.unwrap_or(s.get(i as usize, j as usize)));
                if i == j {
                    assert_eq!(got, 1.0);
                } else {
                    assert!(got < 1.0, "({i},{j}) = {got}");
                }
            }
        }
        assert!(out.postprocess_tag.starts_with("seqpost:L5:"));
    }

    #[test]
    fn sparse_fallback_keeps_input() {
        // 1x1 matrix with a long window: 1 of 11 terms is valid
        let s = SimilarityMatrix::new(1, 1, vec![0.4], "t").unwrap();
        let out = seq_postprocess(&s, &SeqPostConfig::default()).unwrap();
        assert_eq!(out.values(), &[0.4]);
    }

    #[test]
    fn invalid_configs() {
        let s = random_s(2, 3, 3);
        for cfg in [
            SeqPostConfig {
                window: 4,
                ..Default::default()
            },
            SeqPostConfig {
                velocities: vec![],
                ..Default::default()
            },
            SeqPostConfig {
                velocities: vec![-1.0],
                ..Default::default()
            },
            SeqPostConfig {
                min_valid_fraction: 1.5,
                ..Default::default()
            },
        ] {
            assert!(seq_postprocess(&s, &cfg).is_err());
        }
    }

    proptest! {
        #[test]
        fn never_raises_global_max(seed in 0u64..10_000) {
            let s = random_s(seed, 12, 10);
            let out = seq_postprocess(&s, &SeqPostConfig { window: 5, ..Default::default() }).unwrap();
            prop_assert!(out.min_max().1 <= s.min_max().1);
        }

        #[test]
        fn monotone(seed in 0u64..10_000, bump in 0.0f64..0.5) {
            let s1 = random_s(seed, 10, 8);
            let mut rng = Stream::from_seed(seed ^ 0xABCD);
            let s2 = SimilarityMatrix::new(10, 8, s1.values().iter().map(|v| v + bump * rng.uniform()).collect(), "t").unwrap();
            let cfg = SeqPostConfig { window: 5, ..Default::default() };
            let o1 = seq_postprocess(&s1, &cfg).unwrap();
            let o2 = seq_postprocess(&s2, &cfg).unwrap();
            prop_assert!(o1.values().iter().zip(o2.values()).all(|(a, b)| a <= b));
        }
    }
}
