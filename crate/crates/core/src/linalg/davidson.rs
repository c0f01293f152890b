use alloc::vec;
use alloc::vec::Vec;

use super::block::{column, column_mut, combination, gram, project_out};
use super::{dot, norm, random_orthogonal, scale, seeded_rng, symmetric_eigen, EigenPairs, IterativeOptions, LinalgError, SymmetricOperator};

/// Lowest `k` eigenpairs by block Davidson with a diagonal preconditioner.
///
/// `guesses` seed the subspace (for instance the eigenvectors of a nearby
/// tilt); missing directions are filled with seeded random vectors. Good
/// guesses make this far cheaper than a cold Lanczos run.
pub fn davidson_lowest<A: SymmetricOperator + ?Sized>(
    op: &A,
    guesses: &[Vec<f64>],
    opts: &IterativeOptions,
) -> Result<EigenPairs, LinalgError> {
    let n = op.dim();
    let k = opts.k;
    if k > n {
        return Err(LinalgError::TooManyPairs { wanted: k, dim: n });
    }
    let block = (k + 2).min(n);
    let max_basis = opts.max_basis.max(2 * block + 2).min(n);
    let mut rng = seeded_rng(opts.seed);
    let diag: Vec<f64> = (0..n).map(|i| op.diagonal(i)).collect();

    let mut basis: Vec<f64> = Vec::with_capacity(max_basis * n);
    let mut images: Vec<f64> = Vec::with_capacity(max_basis * n);
    let mut m = 0;
    let mut matvecs = 0;

    let mut pending: Vec<f64> = guesses.iter().take(block).flat_map(|g| g.iter().copied()).collect();
    let mut fresh = orthonormalize_new(n, &basis, &mut pending);
    while fresh < block {
        let mut all = basis.clone();
        all.extend_from_slice(&pending);
        match random_orthogonal(&mut rng, n, &all) {
            Some(v) => {
                pending.extend_from_slice(&v);
                fresh += 1;
            }
            None => break,
        }
    }

    // Projected matrix, row-major with stride `m`.
    let mut projected: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    loop {
        let old = m;
        for j in 0..fresh {
            op.apply(column(n, &pending, j), &mut w);
            matvecs += 1;
            images.extend_from_slice(&w);
        }
        basis.extend_from_slice(&pending[..fresh * n]);
        m += fresh;
        pending.clear();

        let new_block = gram(n, &basis, &images[old * n..]);
        let mut g = vec![0.0; m * m];
        for i in 0..old {
            g[i * m..i * m + old].copy_from_slice(&projected[i * old..(i + 1) * old]);
        }
        for jj in 0..m - old {
            let j = old + jj;
            for i in 0..m {
                let x = new_block[jj * m + i];
                if i < old {
                    g[i * m + j] = x;
                    g[j * m + i] = x;
                } else if i <= j {
                    // Symmetrise the new-new corner.
                    let y = 0.5 * (x + new_block[(i - old) * m + j]);
                    g[i * m + j] = y;
                    g[j * m + i] = y;
                }
            }
        }
        projected = g;
        let eig = symmetric_eigen(&projected, m);

        let wanted = block.min(m);
        let coeffs: Vec<f64> = eig.vectors[..wanted].iter().flat_map(|v| v.iter().copied()).collect();
        let ritz = combination(n, &basis, &coeffs, wanted);
        let ritz_images = combination(n, &images, &coeffs, wanted);
        let mut residuals = ritz_images.clone();
        let mut norms = Vec::with_capacity(wanted);
        for j in 0..wanted {
            let theta = eig.values[j];
            let x = column(n, &ritz, j);
            let r = column_mut(n, &mut residuals, j);
            for (ri, xi) in r.iter_mut().zip(x) {
                *ri -= theta * xi;
            }
            norms.push(norm(r));
        }
        let worst = norms[..k].iter().copied().fold(0.0, f64::max);
        let done = |ritz: &[f64]| EigenPairs {
            values: eig.values[..k].to_vec(),
            vectors: (0..k).map(|j| column(n, ritz, j).to_vec()).collect(),
            residuals: norms[..k].to_vec(),
            matvecs,
        };
        if worst <= opts.tolerance || m == n {
            return Ok(done(&ritz));
        }
        let not_converged = || LinalgError::NotConverged {
            wanted: k,
            converged: norms[..k].iter().filter(|&&r| r <= opts.tolerance).count(),
            residual: worst,
            tolerance: opts.tolerance,
            matvecs,
        };
        if matvecs >= opts.max_matvecs {
            return Err(not_converged());
        }

        // Preconditioned corrections for unconverged pairs.
        for j in 0..wanted {
            if norms[j] <= opts.tolerance {
                continue;
            }
            let theta = eig.values[j];
            let r = column(n, &residuals, j);
            let start = pending.len();
            pending.extend(r.iter().zip(&diag).map(|(&ri, &d)| {
                let shift = d - theta;
                let shift = if shift.abs() < 1e-4 { 1e-4f64.copysign(shift) } else { shift };
                ri / shift
            }));
            let t = &mut pending[start..];
            let nt = norm(t);
            if nt == 0.0 || !nt.is_finite() {
                pending.truncate(start);
            } else {
                scale(1.0 / nt, t);
            }
        }

        if m + pending.len() / n > max_basis {
            basis = ritz;
            images = ritz_images;
            m = wanted;
            projected = vec![0.0; m * m];
            for i in 0..m {
                projected[i * m + i] = eig.values[i];
            }
        }
        fresh = orthonormalize_new(n, &basis, &mut pending);
        if fresh == 0 {
            match random_orthogonal(&mut rng, n, &basis) {
                Some(v) => {
                    pending = v;
                    fresh = 1;
                }
                None => return Err(not_converged()),
            }
        }
    }
}

/// Orthonormalises the columns of `block` against `basis` and each other,
/// dropping columns that become negligible; returns the number kept.
fn orthonormalize_new(n: usize, basis: &[f64], block: &mut Vec<f64>) -> usize {
    if block.is_empty() {
        return 0;
    }
    project_out(n, basis, block);
    let cols = block.len() / n;
    let mut kept = 0;
    for j in 0..cols {
        let (done, rest) = block.split_at_mut(j * n);
        let v = &mut rest[..n];
        let before = norm(v);
        for _ in 0..2 {
            for i in 0..kept {
                let u = &done[i * n..(i + 1) * n];
                let c = dot(u, v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let after = norm(v);
        if after > 1e-8 * before.max(1e-300) && after > 1e-14 {
            scale(1.0 / after, v);
            if kept != j {
                let (a, b) = block.split_at_mut(j * n);
                a[kept * n..(kept + 1) * n].copy_from_slice(&b[..n]);
            }
            kept += 1;
        }
    }
    block.truncate(kept * n);
    kept
}
