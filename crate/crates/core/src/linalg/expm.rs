use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{cdot, cnorm, symmetric_eigen, LinalgError, SymmetricOperator};

/// Controls for Krylov propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOptions {
    /// Largest Krylov dimension per substep.
    pub max_dim: usize,
    /// Target error of the propagated vector (2-norm).
    pub tolerance: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { max_dim: 40, tolerance: 1e-12 }
    }
}

/// `exp(−i h A) v` for real-symmetric `A`, by Lanczos projection with full
/// reorthogonalisation. Splits `h` into substeps until the a-posteriori
/// estimate `β_m |e_mᵀ exp(−i h T) e_1|` meets the tolerance.
pub fn krylov_expm<A: SymmetricOperator + ?Sized>(
    op: &A,
    h: f64,
    v: &[Complex64],
    opts: &KrylovOptions,
) -> Result<Vec<Complex64>, LinalgError> {
    let mut state = v.to_vec();
    let mut remaining = h;
    // Initial substep from the standard rule of thumb ‖A‖h ≲ m/2.
    let bound = op.norm_bound().max(1e-300);
    let mut sub = remaining.abs().min(0.5 * opts.max_dim as f64 / bound).copysign(h);
    let mut fails = 0;
    while remaining != 0.0 {
        if sub.abs() > remaining.abs() {
            sub = remaining;
        }
        let scale = cnorm(&state).max(1e-300);
        let (next, estimate) = krylov_step(op, sub, &state, opts.max_dim, opts.tolerance * scale);
        if estimate <= opts.tolerance * scale || sub.abs() < 1e-14 * h.abs().max(1.0) {
            state = next;
            remaining -= sub;
            if remaining.abs() < 1e-15 * h.abs() {
                remaining = 0.0;
            }
            fails = 0;
            if estimate < 0.1 * opts.tolerance * scale {
                sub *= 1.5;
            }
        } else {
            fails += 1;
            if fails > 60 {
                return Err(LinalgError::KrylovStagnated { tolerance: opts.tolerance, estimate });
            }
            sub *= 0.5;
        }
    }
    Ok(state)
}

/// `exp(−i h A) v` by Chebyshev expansion over the Gershgorin interval of
/// `A`, truncated once the Bessel tail falls below `tolerance`.
///
/// Needs only products and three-term recurrences, so it beats Krylov
/// projection when `h‖A‖` is modest; the term count grows linearly with it.
pub fn chebyshev_expm<A: SymmetricOperator + ?Sized>(
    op: &A,
    h: f64,
    v: &[Complex64],
    tolerance: f64,
) -> Vec<Complex64> {
    let n = v.len();
    let (lo, hi) = op.spectral_interval();
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let global = Complex64::from_polar(1.0, -h * centre);
    let x = h * half;
    if x.abs() < 1e-300 {
        return v.iter().map(|z| global * z).collect();
    }
    let bessel = bessel_series(x.abs(), tolerance * 0.5 / cnorm(v).max(1e-300));
    // exp(−i x y) = Σ_k (2 − δ_k0) (−i)^k J_k(x) T_k(y)
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let mut phase = Complex64::new(1.0, 0.0);
    let step = Complex64::new(0.0, -sign);
    let mut out: Vec<Complex64> = v.iter().map(|z| z * bessel[0]).collect();
    let mut prev = v.to_vec();
    let mut cur = vec![Complex64::default(); n];
    let mut w = vec![Complex64::default(); n];
    let mapped = |w: &[Complex64], t: &[Complex64], k: usize| (w[k] - centre * t[k]) / half;
    for k in 1..bessel.len() {
        phase *= step;
        let coef = phase * (2.0 * bessel[k]);
        if k == 1 {
            op.apply_complex(&prev, &mut w);
            for i in 0..n {
                cur[i] = mapped(&w, &prev, i);
            }
        } else {
            op.apply_complex(&cur, &mut w);
            for i in 0..n {
                let next = 2.0 * mapped(&w, &cur, i) - prev[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
        }
        for (o, c) in out.iter_mut().zip(&cur) {
            *o += coef * c;
        }
    }
    for o in out.iter_mut() {
        *o *= global;
    }
    out
}

/// `J_0(x), …, J_K(x)` by normalised backward recurrence, with `K` the first
/// order past `x` where `2|J_K|` drops below `tail`.
fn bessel_series(x: f64, tail: f64) -> Vec<f64> {
    let start = (x + 30.0 + 10.0 * libm::cbrt(x)) as usize;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = (2.0 * k as f64 / x) * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    let mut out: Vec<f64> = j.iter().map(|v| v / norm).collect();
    let cut = (1..out.len()).find(|&k| k as f64 > x && 2.0 * out[k].abs() < tail).unwrap_or(out.len() - 1);
    out.truncate(cut + 1);
    out
}

fn krylov_step<A: SymmetricOperator + ?Sized>(
    op: &A,
    h: f64,
    v: &[Complex64],
    max_dim: usize,
    tolerance: f64,
) -> (Vec<Complex64>, f64) {
    let n = v.len();
    let beta0 = cnorm(v);
    if beta0 == 0.0 {
        return (v.to_vec(), 0.0);
    }
    let m_cap = max_dim.min(n).max(1);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m_cap);
    basis.push(v.iter().map(|x| x / beta0).collect());
    let mut alpha: Vec<f64> = Vec::with_capacity(m_cap);
    let mut beta: Vec<f64> = Vec::with_capacity(m_cap);
    let mut w = vec![Complex64::default(); n];
    let (c, estimate) = loop {
        let j = alpha.len();
        op.apply_complex(&basis[j], &mut w);
        let a = cdot(&basis[j], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = cdot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let nb = cnorm(&w);
        let m = alpha.len();
        let exact = m == n || nb <= 1e-13 * (a.abs() + 1.0);
        // The estimate is cheap next to the products; check it every other step.
        if exact || m == m_cap || (m >= 4 && m % 2 == 0) {
            let c = tridiagonal_exp(&alpha, &beta, h);
            let estimate = if exact { 0.0 } else { beta0 * nb * c[m - 1].norm() };
            if exact || m == m_cap || estimate <= tolerance {
                break (c, estimate);
            }
        }
        beta.push(nb);
        basis.push(w.iter().map(|x| x / nb).collect());
    };
    let mut out = vec![Complex64::default(); n];
    for (b, ci) in basis.iter().zip(&c) {
        let s = ci * beta0;
        for (o, bi) in out.iter_mut().zip(b) {
            *o += s * bi;
        }
    }
    (out, estimate)
}

/// `exp(−i h T) e_1` for the symmetric tridiagonal `T` with diagonal `alpha`
/// and off-diagonal `beta`.
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], h: f64) -> Vec<Complex64> {
    let m = alpha.len();
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        t[i * m + i] = alpha[i];
        if i + 1 < m {
            t[i * m + i + 1] = beta[i];
            t[(i + 1) * m + i] = beta[i];
        }
    }
    let eig = symmetric_eigen(&t, m);
    let mut c = vec![Complex64::default(); m];
    for (lambda, y) in eig.values.iter().zip(&eig.vectors) {
        let phase = Complex64::from_polar(y[0], -h * lambda);
        for i in 0..m {
            c[i] += phase * y[i];
        }
    }
    c
}
