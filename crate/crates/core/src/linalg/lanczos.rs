use alloc::vec;
use alloc::vec::Vec;

use super::block::{column, combination, project_out};
use super::{norm, random_orthogonal, scale, seeded_rng, symmetric_eigen, EigenPairs, IterativeOptions, LinalgError, SymmetricOperator};

/// Lowest `k` eigenpairs by thick-restart Lanczos with full
/// reorthogonalisation, starting from a seeded random vector.
///
/// The projected matrix is assembled from explicit Gram–Schmidt coefficients,
/// so after a restart it carries the arrowhead coupling between retained Ritz
/// vectors and the new residual direction without special bookkeeping.
pub fn lanczos_lowest<A: SymmetricOperator + ?Sized>(
    op: &A,
    opts: &IterativeOptions,
) -> Result<EigenPairs, LinalgError> {
    let n = op.dim();
    let k = opts.k;
    if k > n {
        return Err(LinalgError::TooManyPairs { wanted: k, dim: n });
    }
    let max_basis = opts.max_basis.max(k + 2).min(n);
    let keep = (k + (max_basis - k) / 3).min(max_basis.saturating_sub(1)).max(k);
    let mut rng = seeded_rng(opts.seed);
    let breakdown = 1e-12 * op.norm_bound().max(1.0);

    // Orthonormal basis, column-major.
    let mut basis: Vec<f64> = Vec::with_capacity(max_basis * n);
    let mut m = 0;
    // Projected matrix, row-major m × m.
    let mut t: Vec<f64> = Vec::new();
    let mut next = random_orthogonal(&mut rng, n, &[]).expect("nonempty space");
    let mut has_next = true;
    let mut matvecs = 0;
    let mut w = vec![0.0; n];

    loop {
        while m < max_basis && has_next {
            op.apply(&next, &mut w);
            matvecs += 1;
            basis.extend_from_slice(&next);
            m += 1;
            let coeffs = project_out(n, &basis, &mut w);
            let mut grown = vec![0.0; m * m];
            for i in 0..m - 1 {
                grown[i * m..i * m + m - 1].copy_from_slice(&t[i * (m - 1)..(i + 1) * (m - 1)]);
            }
            for (i, &c) in coeffs.iter().enumerate() {
                grown[i * m + m - 1] = c;
                grown[(m - 1) * m + i] = c;
            }
            t = grown;
            let beta = norm(&w);
            if m == n {
                has_next = false;
            } else if beta <= breakdown {
                // Invariant subspace: continue from a fresh direction.
                match random_orthogonal(&mut rng, n, &basis) {
                    Some(v) => next = v,
                    None => has_next = false,
                }
            } else {
                scale(1.0 / beta, &mut w);
                next.copy_from_slice(&w);
            }
        }

        let eig = symmetric_eigen(&t, m);
        let p = keep.min(m);
        let coeffs: Vec<f64> = eig.vectors[..p].iter().flat_map(|v| v.iter().copied()).collect();
        let ritz = combination(n, &basis, &coeffs, p);
        let mut residuals = Vec::with_capacity(k);
        for j in 0..k {
            let x = column(n, &ritz, j);
            op.apply(x, &mut w);
            matvecs += 1;
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi -= eig.values[j] * xi;
            }
            residuals.push(norm(&w));
        }
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        if worst <= opts.tolerance || !has_next {
            return Ok(EigenPairs {
                values: eig.values[..k].to_vec(),
                vectors: (0..k).map(|j| column(n, &ritz, j).to_vec()).collect(),
                residuals,
                matvecs,
            });
        }
        if matvecs >= opts.max_matvecs {
            let converged = residuals.iter().filter(|&&r| r <= opts.tolerance).count();
            return Err(LinalgError::NotConverged { wanted: k, converged, residual: worst, tolerance: opts.tolerance, matvecs });
        }

        // Thick restart: keep the lowest Ritz vectors and the pending direction.
        basis = ritz;
        basis.reserve(max_basis * n - basis.len());
        m = p;
        t = vec![0.0; p * p];
        for i in 0..p {
            t[i * p + i] = eig.values[i];
        }
        project_out(n, &basis, &mut next);
        let nv = norm(&next);
        if nv > 1e-8 {
            scale(1.0 / nv, &mut next);
        } else {
            match random_orthogonal(&mut rng, n, &basis) {
                Some(v) => next = v,
                None => has_next = false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::sparse::SparseHermitianOperator;

    fn laplacian(n: usize) -> SparseHermitianOperator {
        let diag = (0..n).map(|i| 2.0 + 0.01 * i as f64).collect();
        SparseHermitianOperator::from_triplets(diag, (0..n - 1).map(|i| (i, i + 1, -1.0)))
    }

    #[test]
    fn matches_dense_on_a_path_graph() {
        let a = laplacian(300);
        let dense = symmetric_eigen(&a.to_dense(), 300);
        let mut opts = IterativeOptions::new(4, 1e-9);
        opts.max_basis = 40;
        let got = lanczos_lowest(&a, &opts).unwrap();
        for j in 0..4 {
            assert!((got.values[j] - dense.values[j]).abs() < 1e-10, "{j}");
            let overlap = dot(&got.vectors[j], &dense.vectors[j]).abs();
            assert!(1.0 - overlap * overlap < 1e-10);
        }
    }

    #[test]
    fn tiny_operator_is_solved_exactly() {
        let a = laplacian(3);
        let got = lanczos_lowest(&a, &IterativeOptions::new(3, 1e-12)).unwrap();
        let dense = symmetric_eigen(&a.to_dense(), 3);
        for j in 0..3 {
            assert!((got.values[j] - dense.values[j]).abs() < 1e-12);
        }
    }
}
