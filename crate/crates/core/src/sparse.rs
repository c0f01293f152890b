//! Sparse real-symmetric operators over a basis sector.
//!
//! Every operator in this crate is real in the occupation basis, so values are
//! stored as `f64`. Only the strict upper triangle is kept (compressed rows)
//! next to a dense diagonal; products apply the mirrored lower half on the fly.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitianOperator {
    dim: usize,
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseHermitianOperator {
    /// Builds an operator from a diagonal and off-diagonal triplets.
    ///
    /// Triplets may sit in either triangle: `(r, c, v)` with `r > c` is read as
    /// the mirrored `(c, r, v)`. Duplicates are summed and exact zeros dropped.
    pub fn from_triplets(diag: Vec<f64>, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let dim = diag.len();
        let mut entries: Vec<(u32, u32, f64)> = triplets
            .into_iter()
            .filter(|&(r, c, _)| {
                assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
                assert!(r != c, "diagonal entries belong in `diag`");
                true
            })
            .map(|(r, c, v)| if r < c { (r as u32, c as u32, v) } else { (c as u32, r as u32, v) })
            .collect();
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            cols.push(c);
            vals.push(v);
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut op = SparseHermitianOperator { dim, diag, row_ptr, cols, vals };
        op.drop_zeros();
        op
    }

    /// Diagonal operator.
    pub fn diagonal_only(diag: Vec<f64>) -> Self {
        let dim = diag.len();
        SparseHermitianOperator { dim, diag, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != 0.0 {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Number of stored strictly-upper entries.
    pub fn off_diagonal_nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored upper-triangle entries `(row, col, value)` with `row < col`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k] as usize, self.vals[k]))
        })
    }

    /// Matrix element `⟨row|A|col⟩`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return self.diag[row];
        }
        let (r, c) = if row < col { (row, col) } else { (col, row) };
        let slice = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match slice.binary_search(&(c as u32)) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    /// `y = (A + s·diag(d)) x` for real vectors; `shift` adds an extra scaled
    /// diagonal without materialising a new operator.
    pub fn apply_shifted(&self, shift: Option<(f64, &[f64])>, x: &[f64], y: &mut [f64]) {
        self.apply_generic(shift, x, y);
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_generic(None, x, y);
    }

    pub fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_generic(None, x, y);
    }

    pub fn apply_complex_shifted(&self, shift: Option<(f64, &[f64])>, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_generic(shift, x, y);
    }

    fn apply_generic<T>(&self, shift: Option<(f64, &[f64])>, x: &[T], y: &mut [T])
    where
        T: Copy + core::ops::Mul<f64, Output = T> + core::ops::AddAssign + Default,
    {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        match shift {
            Some((s, d)) => {
                for i in 0..self.dim {
                    y[i] = x[i] * (self.diag[i] + s * d[i]);
                }
            }
            None => {
                for i in 0..self.dim {
                    y[i] = x[i] * self.diag[i];
                }
            }
        }
        for r in 0..self.dim {
            let xr = x[r];
            let mut acc = T::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k] as usize;
                let v = self.vals[k];
                acc += x[c] * v;
                y[c] += xr * v;
            }
            y[r] += acc;
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diag[i];
        }
        for (r, c, v) in self.upper_entries() {
            a[r * n + c] = v;
            a[c * n + r] = v;
        }
        a
    }

    /// Gershgorin bound on the spectral radius: maximum absolute row sum.
    pub fn norm_bound(&self) -> f64 {
        self.off_diagonal_radii().iter().zip(&self.diag).fold(0.0, |m, (r, d)| m.max(r + d.abs()))
    }

    /// Absolute off-diagonal row sums (Gershgorin radii).
    pub fn off_diagonal_radii(&self) -> Vec<f64> {
        let mut rows = vec![0.0; self.dim];
        for (r, c, v) in self.upper_entries() {
            rows[r] += v.abs();
            rows[c] += v.abs();
        }
        rows
    }

    /// Gershgorin interval containing the spectrum.
    pub fn spectral_interval(&self) -> (f64, f64) {
        gershgorin(&self.diag, &self.off_diagonal_radii(), 0.0, &[])
    }

    /// `⟨x|A|x⟩` for a real vector.
    pub fn expectation(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// `⟨x|A|x⟩` for a complex vector; real because `A` is symmetric.
    pub fn expectation_complex(&self, x: &[Complex64]) -> f64 {
        let mut y = vec![Complex64::default(); self.dim];
        self.apply_complex(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// `[min(d_i − r_i), max(d_i + r_i)]` for the diagonal `d + shift·extra`.
pub(crate) fn gershgorin(diag: &[f64], radii: &[f64], shift: f64, extra: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, (d, r)) in diag.iter().zip(radii).enumerate() {
        let d = d + extra.get(i).map_or(0.0, |e| shift * e);
        lo = lo.min(d - r);
        hi = hi.max(d + r);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseHermitianOperator {
        SparseHermitianOperator::from_triplets(
            vec![1.0, 2.0, 3.0],
            [(0, 1, 0.5), (2, 0, -1.0), (1, 0, 0.25), (1, 2, 0.0)],
        )
    }

    #[test]
    fn triplets_are_canonicalised() {
        let a = sample();
        assert_eq!(a.off_diagonal_nnz(), 2);
        assert_eq!(a.get(0, 1), 0.75);
        assert_eq!(a.get(1, 0), 0.75);
        assert_eq!(a.get(2, 0), -1.0);
        assert_eq!(a.get(1, 2), 0.0);
        assert_eq!(a.get(2, 2), 3.0);
    }

    #[test]
    fn product_matches_dense() {
        let a = sample();
        let dense = a.to_dense();
        let x = [0.3, -1.2, 2.0];
        let mut y = [0.0; 3];
        a.apply(&x, &mut y);
        for i in 0..3 {
            let expected: f64 = (0..3).map(|j| dense[i * 3 + j] * x[j]).sum();
            assert!((y[i] - expected).abs() < 1e-15);
        }
        let d = [1.0, 0.0, -1.0];
        a.apply_shifted(Some((2.0, &d)), &x, &mut y);
        assert!((y[0] - (3.0 * 0.3 + 0.75 * -1.2 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn complex_product_is_linear() {
        let a = sample();
        let x = [Complex64::new(1.0, 1.0), Complex64::new(0.0, -2.0), Complex64::new(0.5, 0.0)];
        let mut y = [Complex64::default(); 3];
        a.apply_complex(&x, &mut y);
        let re: [f64; 3] = core::array::from_fn(|i| x[i].re);
        let im: [f64; 3] = core::array::from_fn(|i| x[i].im);
        let (mut yr, mut yi) = ([0.0; 3], [0.0; 3]);
        a.apply(&re, &mut yr);
        a.apply(&im, &mut yi);
        for i in 0..3 {
            assert!((y[i] - Complex64::new(yr[i], yi[i])).norm() < 1e-15);
        }
        assert!(a.norm_bound() >= 3.0);
    }
}
