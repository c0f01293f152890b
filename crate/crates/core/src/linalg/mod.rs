//! Linear-algebra kernels: dense symmetric and Hermitian eigensolvers, the
//! iterative lowest-eigenpair solvers used above the dense limit, and Krylov
//! propagation `exp(−i h A) v`.

mod block;
mod davidson;
mod dense;
mod expm;
mod lanczos;

pub use davidson::davidson_lowest;
pub use dense::{hermitian_eigen, symmetric_eigen, DenseEigen, HermitianEigen};
pub use expm::{chebyshev_expm, krylov_expm, KrylovOptions};
pub use lanczos::lanczos_lowest;

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sparse::SparseHermitianOperator;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error(
        "eigensolver stopped after {matvecs} products with {converged}/{wanted} pairs converged \
         (worst residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    NotConverged { wanted: usize, converged: usize, residual: f64, tolerance: f64, matvecs: usize },
    #[error("requested {wanted} eigenpairs from an operator of dimension {dim}")]
    TooManyPairs { wanted: usize, dim: usize },
    #[error("Krylov propagation failed to reach tolerance {tolerance:.3e} (estimate {estimate:.3e})")]
    KrylovStagnated { tolerance: f64, estimate: f64 },
}

/// A real-symmetric operator that can be applied to real and complex vectors.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]);
    /// Diagonal element `A_ii`, used for preconditioning.
    fn diagonal(&self, i: usize) -> f64;
    /// Upper bound on the spectral radius.
    fn norm_bound(&self) -> f64;
    /// Interval containing the whole spectrum.
    fn spectral_interval(&self) -> (f64, f64) {
        let b = self.norm_bound();
        (-b, b)
    }
    /// Row-major dense copy.
    fn to_dense(&self) -> Vec<f64>;
}

impl SymmetricOperator for SparseHermitianOperator {
    fn dim(&self) -> usize {
        SparseHermitianOperator::dim(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        SparseHermitianOperator::apply(self, x, y)
    }
    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        SparseHermitianOperator::apply_complex(self, x, y)
    }
    fn diagonal(&self, i: usize) -> f64 {
        SparseHermitianOperator::diagonal(self)[i]
    }
    fn norm_bound(&self) -> f64 {
        SparseHermitianOperator::norm_bound(self)
    }
    fn spectral_interval(&self) -> (f64, f64) {
        SparseHermitianOperator::spectral_interval(self)
    }
    fn to_dense(&self) -> Vec<f64> {
        SparseHermitianOperator::to_dense(self)
    }
}

/// Controls for the iterative lowest-eigenpair solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeOptions {
    /// Number of lowest pairs wanted.
    pub k: usize,
    /// Absolute residual target `‖Av − θv‖`.
    pub tolerance: f64,
    /// Largest subspace kept before a thick restart.
    pub max_basis: usize,
    /// Cap on operator applications.
    pub max_matvecs: usize,
    /// Seed for the random start vector.
    pub seed: u64,
}

impl IterativeOptions {
    pub fn new(k: usize, tolerance: f64) -> Self {
        IterativeOptions { k, tolerance, max_basis: (3 * k + 40).max(60), max_matvecs: 20_000, seed: 0x5eed }
    }
}

/// Lowest eigenpairs, ascending, with their residual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

/// Dot product with eight independent accumulators so the loop vectorises.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ac, ar) = (a.chunks_exact(8), a.chunks_exact(8).remainder());
    let br = b.chunks_exact(8).remainder();
    for (x, y) in ac.zip(b.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub(crate) fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// `⟨a|b⟩` with the first argument conjugated.
pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    libm::sqrt(a.iter().map(|x| x.norm_sqr()).sum())
}

/// A random unit vector orthogonal to the column block `basis`, reproducible
/// from `rng`.
pub(crate) fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize, basis: &[f64]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let before = norm(&w);
        block::project_out(dim, basis, &mut w);
        let after = norm(&w);
        if after > 1e-6 * before {
            scale(1.0 / after, &mut w);
            return Some(w);
        }
    }
    None
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
