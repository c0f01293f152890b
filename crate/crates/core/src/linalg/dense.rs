use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Eigendecomposition of a real-symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector belonging to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Eigendecomposition of a complex Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

/// Full eigendecomposition of the row-major symmetric `n × n` matrix `a`.
pub fn symmetric_eigen(a: &[f64], n: usize) -> DenseEigen {
    assert_eq!(a.len(), n * n);
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    DenseEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect(),
    }
}

/// Full eigendecomposition of the row-major Hermitian `n × n` matrix `a`.
pub fn hermitian_eigen(a: &[Complex64], n: usize) -> HermitianEigen {
    assert_eq!(a.len(), n * n);
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    HermitianEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let e = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        assert!((e.vectors[0][0] + e.vectors[0][1]).abs() < 1e-14);
    }

    #[test]
    fn pauli_y_is_hermitian() {
        let i = Complex64::i();
        let z = Complex64::default();
        let e = hermitian_eigen(&[z, -i, i, z], 2);
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let v = &e.vectors[1];
        // σ_y v = v
        let w = [-i * v[1], i * v[0]];
        assert!((w[0] - v[0]).norm() + (w[1] - v[1]).norm() < 1e-13);
    }
}
