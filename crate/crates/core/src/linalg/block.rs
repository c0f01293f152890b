//! Tall-skinny block kernels over column-major storage.
//!
//! A block of `c` vectors of length `n` is one contiguous slice with column
//! `j` at `[j*n, (j+1)*n)`. Rows are processed in chunks so the narrow side
//! stays in cache and each tall operand is streamed once.

use alloc::vec;
use alloc::vec::Vec;

const CHUNK: usize = 512;

/// `out (n × b) += basis (n × m) · coeffs (m × b)`, coefficients column-major.
pub(crate) fn accumulate_combination(n: usize, basis: &[f64], coeffs: &[f64], out: &mut [f64]) {
    let m = basis.len() / n.max(1);
    let b = out.len() / n.max(1);
    debug_assert_eq!(coeffs.len(), m * b);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        for i in 0..m {
            let v = &basis[i * n + start..i * n + end];
            for j in 0..b {
                let c = coeffs[j * m + i];
                if c == 0.0 {
                    continue;
                }
                let o = &mut out[j * n + start..j * n + end];
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi += c * vi;
                }
            }
        }
        start = end;
    }
}

/// `basis (n × m) · coeffs (m × b)` as a fresh block.
pub(crate) fn combination(n: usize, basis: &[f64], coeffs: &[f64], b: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * b];
    accumulate_combination(n, basis, coeffs, &mut out);
    out
}

/// `aᵀ b` for blocks `a (n × p)` and `b (n × q)`; result `p × q` column-major.
pub(crate) fn gram(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let p = a.len() / n.max(1);
    let q = b.len() / n.max(1);
    let mut g = vec![0.0; p * q];
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        for j in 0..q {
            let bj = &b[j * n + start..j * n + end];
            for i in 0..p {
                let ai = &a[i * n + start..i * n + end];
                g[j * p + i] += super::dot(ai, bj);
            }
        }
        start = end;
    }
    g
}

/// Removes from every column of `w` its component along the orthonormal
/// `basis`, with two passes; returns the first-pass coefficients (`m × q`).
pub(crate) fn project_out(n: usize, basis: &[f64], w: &mut [f64]) -> Vec<f64> {
    if basis.is_empty() {
        return Vec::new();
    }
    let first = gram(n, basis, w);
    let neg: Vec<f64> = first.iter().map(|x| -x).collect();
    accumulate_combination(n, basis, &neg, w);
    let second = gram(n, basis, w);
    let neg: Vec<f64> = second.iter().map(|x| -x).collect();
    accumulate_combination(n, basis, &neg, w);
    first
}

pub(crate) fn column(n: usize, block: &[f64], j: usize) -> &[f64] {
    &block[j * n..(j + 1) * n]
}

pub(crate) fn column_mut(n: usize, block: &mut [f64], j: usize) -> &mut [f64] {
    &mut block[j * n..(j + 1) * n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_naive_loops() {
        let n = 1300;
        let a: Vec<f64> = (0..3 * n).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let b: Vec<f64> = (0..2 * n).map(|i| ((i * 13) % 71) as f64 / 35.0 - 1.0).collect();
        let g = gram(n, &a, &b);
        for i in 0..3 {
            for j in 0..2 {
                let naive: f64 = (0..n).map(|r| a[i * n + r] * b[j * n + r]).sum();
                assert!((g[j * 3 + i] - naive).abs() < 1e-9);
            }
        }
        let coeffs = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0];
        let c = combination(n, &a, &coeffs, 2);
        for r in [0, 700, n - 1] {
            let naive = a[r] - 2.0 * a[n + r] + 0.5 * a[2 * n + r];
            assert!((c[r] - naive).abs() < 1e-12);
        }
    }
}
