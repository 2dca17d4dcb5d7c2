//! Small dense-vector kernels with a fixed summation order.

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation. The split point depends only on the slice
/// length, so the result is independent of how callers partition work.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(x)` without materializing the mapped slice.
pub fn pairwise_sum_by(xs: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += f(x);
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Scales `v` to unit length. Returns false (leaving `v` untouched) for a zero vector.
pub fn normalize_in_place(v: &mut [f64]) -> bool {
    let n = norm_sq(v).sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    true
}
