//! Open-system evolution under charge-configuration dephasing.
//!
//! The master equation is
//!
//! ```text
//! dρ/dτ = −i[H(ε(τ)), ρ] + γ Σ_n (L_n ρ L_n − ½{L_n, ρ})
//! ```
//!
//! with `L_n` the projectors onto charge configurations. Because the `L_n`
//! are orthogonal projectors the dissipator only damps coherences between
//! different configurations, at rate `γ`, and its flow is exact. Steps use a
//! symmetric split: half a dephasing step, the unitary step, half a dephasing
//! step.
//!
//! The unitary step over `[τ_c − a, τ_c + a]` works in the eigenbasis of
//! `H_c = H(ε(τ_c))`. Writing `H(τ_c + s) = H_c + s r D`, with `r` the ramp
//! rate,
//!
//! ```text
//! U = e^{−i H_c a} · exp(Ω₁ + Ω₂ + …) · e^{−i H_c a},
//! (Ω₁)_jk = 2 r D̃_jk ∫₀^a s sin(ω_jk s) ds,   ω_jk = λ_j − λ_k
//! ```
//!
//! so fast phases are exact and only the slow drift is expanded. Keeping
//! `Ω₁` leaves an error below `x²/2` with `x = r ‖D − c‖ a²`; steps are sized
//! so that `x² ≤ tolerance`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::{schedule_epsilon, DynamicsError, IntegratorOptions, TiltSchedule};
use crate::linalg::{hermitian_eigen, symmetric_eigen, SymmetricOperator};
use crate::model::{build_charge_projectors, projector_labels, ChargeConfig, ChargeProjector};
use crate::spectral::{SpectralError, SpectrumSolver, StateLabel};

/// Largest sector evolved as a dense density matrix.
pub const MAX_DENSITY_DIM: usize = 1300;
/// Floor applied to `q_n` in [`kl_distance`] when `p_n > 0` and `q_n = 0`.
pub const KL_FLOOR: f64 = 1e-12;
/// Accepted negative eigenvalue before evolution is declared unphysical.
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;
/// Largest `γ·h` per step, bounding the splitting error.
const MAX_DEPHASING_PER_STEP: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpenSystemError {
    #[error("density matrix of dimension {dim} exceeds the dense limit {MAX_DENSITY_DIM}")]
    DimensionTooLarge { dim: usize },
    #[error("density matrix has dimension {got}, the sector has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix data has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("density matrix trace is {trace}, expected 1")]
    Trace { trace: f64 },
    #[error("density matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("density matrix has eigenvalue {eigenvalue:.3e} at t = {time}")]
    Positivity { time: f64, eigenvalue: f64 },
    #[error("dephasing rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("distributions are over different configuration sets")]
    MismatchedSupport,
    #[error("probabilities must be non-negative and sum to 1 (sum {sum})")]
    InvalidDistribution { sum: f64 },
    #[error("no finite sample count for distance {0}")]
    NoFiniteSamples(f64),
    #[error("target error must lie in (0, 1), got {0}")]
    InvalidTarget(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A dense density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    /// `|ψ⟩⟨ψ|` for a normalised `ψ`.
    pub fn pure(psi: &[Complex64]) -> Self {
        let n = psi.len();
        let mut data = vec![Complex64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = psi[i] * psi[j].conj();
            }
        }
        DensityMatrix { dim: n, data }
    }

    /// `I/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0 / dim as f64, 0.0);
        }
        DensityMatrix { dim, data }
    }

    /// Wraps row-major data after checking it is a valid state.
    pub fn from_matrix(dim: usize, data: Vec<Complex64>) -> Result<Self, OpenSystemError> {
        if data.len() != dim * dim {
            return Err(OpenSystemError::BadLength { expected: dim * dim, got: data.len() });
        }
        let rho = DensityMatrix { dim, data };
        rho.validate()?;
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max |ρ_ij − ρ_ji*|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    /// Populations `ρ_ii`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).collect()
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.data, self.dim).values
    }

    /// Checks trace, Hermiticity and positivity against the documented
    /// tolerances.
    pub fn validate(&self) -> Result<(), OpenSystemError> {
        let trace = self.trace();
        if !((trace - 1.0).abs() <= 1e-8) {
            return Err(OpenSystemError::Trace { trace });
        }
        let deviation = self.hermiticity_error();
        if !(deviation <= 1e-10) {
            return Err(OpenSystemError::NotHermitian { deviation });
        }
        let low = self.eigenvalues().first().copied().unwrap_or(0.0);
        if low < -POSITIVITY_TOLERANCE {
            return Err(OpenSystemError::Positivity { time: 0.0, eigenvalue: low });
        }
        Ok(())
    }

    /// `⟨φ|ρ|φ⟩` for a real vector.
    pub fn expectation_real(&self, phi: &[f64]) -> f64 {
        let n = self.dim;
        let mut acc = Complex64::default();
        for i in 0..n {
            if phi[i] == 0.0 {
                continue;
            }
            let row = &self.data[i * n..(i + 1) * n];
            let mut r = Complex64::default();
            for (z, p) in row.iter().zip(phi) {
                r += z * p;
            }
            acc += r * phi[i];
        }
        acc.re
    }

    /// `½ ‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff: Vec<Complex64> = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        0.5 * hermitian_eigen(&diff, self.dim).values.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Per-site `⟨n_k⟩`.
    pub fn charge_profile(&self, sector: &crate::fock::BasisSector) -> Vec<f64> {
        let mut out = vec![0.0; sector.sites()];
        for (i, b) in sector.states().iter().enumerate() {
            let w = self.data[i * self.dim + i].re;
            for (k, o) in out.iter_mut().enumerate() {
                *o += w * b.occupancy(k) as f64;
            }
        }
        out
    }

    /// Replaces `ρ` by its positive part, rescaled to unit trace.
    fn clip_negative(&mut self) {
        let eig = hermitian_eigen(&self.data, self.dim);
        let n = self.dim;
        let total: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
        let mut data = vec![Complex64::default(); n * n];
        for (l, v) in eig.values.iter().zip(&eig.vectors) {
            let w = l.max(0.0) / total;
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = v[i] * w;
                for j in 0..n {
                    data[i * n + j] += vi * v[j].conj();
                }
            }
        }
        self.data = data;
    }
}

/// Probabilities of charge configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDistribution {
    configs: Vec<ChargeConfig>,
    probs: Vec<f64>,
}

impl ChargeDistribution {
    /// Checks non-negativity and normalisation to `1e-8`.
    pub fn new(configs: Vec<ChargeConfig>, probs: Vec<f64>) -> Result<Self, OpenSystemError> {
        if configs.len() != probs.len() {
            return Err(OpenSystemError::BadLength { expected: configs.len(), got: probs.len() });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || !((sum - 1.0).abs() <= 1e-8) {
            return Err(OpenSystemError::InvalidDistribution { sum });
        }
        Ok(ChargeDistribution { configs, probs })
    }

    /// Normalises non-negative weights aligned with `projectors`; negative
    /// rounding noise is clipped.
    pub fn from_weights(projectors: &[ChargeProjector], weights: &[f64]) -> Self {
        let clipped: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        ChargeDistribution {
            configs: projectors.iter().map(|p| p.config.clone()).collect(),
            probs: clipped.iter().map(|w| if total > 0.0 { w / total } else { 0.0 }).collect(),
        }
    }

    /// All weight on `config` over the configuration set of `projectors`.
    pub fn definite(projectors: &[ChargeProjector], config: &ChargeConfig) -> Option<Self> {
        let idx = projectors.iter().position(|p| &p.config == config)?;
        let mut w = vec![0.0; projectors.len()];
        w[idx] = 1.0;
        Some(Self::from_weights(projectors, &w))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn configs(&self) -> &[ChargeConfig] {
        &self.configs
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, config: &ChargeConfig) -> f64 {
        self.configs.iter().position(|c| c == config).map_or(0.0, |i| self.probs[i])
    }

    /// Most likely configuration; ties resolve to the lexicographically first.
    pub fn dominant(&self) -> (&ChargeConfig, f64) {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        (&self.configs[best], self.probs[best])
    }

    /// Configurations with probability above `threshold`.
    pub fn support(&self, threshold: f64) -> impl Iterator<Item = (&ChargeConfig, f64)> + '_ {
        self.configs.iter().zip(self.probs.iter().copied()).filter(move |(_, p)| *p > threshold)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChargeConfig, f64)> + '_ {
        self.configs.iter().zip(self.probs.iter().copied())
    }
}

/// `p_n = Tr(ρ L_n)`.
pub fn charge_distribution(rho: &DensityMatrix, projectors: &[ChargeProjector]) -> ChargeDistribution {
    let diag = rho.diagonal();
    let weights: Vec<f64> = projectors.iter().map(|p| p.members.iter().map(|&m| diag[m]).sum()).collect();
    ChargeDistribution::from_weights(projectors, &weights)
}

/// Configuration probabilities of a real state vector.
pub fn state_distribution(vector: &[f64], projectors: &[ChargeProjector]) -> ChargeDistribution {
    let weights: Vec<f64> =
        projectors.iter().map(|p| p.members.iter().map(|&m| vector[m] * vector[m]).sum()).collect();
    ChargeDistribution::from_weights(projectors, &weights)
}

/// `−Σ λ log₂ λ` in bits, with `0 log 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of(&rho.eigenvalues())
}

fn entropy_of(values: &[f64]) -> f64 {
    values.iter().filter(|&&l| l > 0.0).map(|&l| -l * libm::log2(l)).sum()
}

/// `d = Σ p_n log₂(p_n/q_n)`, flooring `q_n` at [`KL_FLOOR`] where `p_n > 0`.
pub fn kl_distance(p: &ChargeDistribution, q: &ChargeDistribution) -> Result<f64, OpenSystemError> {
    if p.configs != q.configs {
        return Err(OpenSystemError::MismatchedSupport);
    }
    let mut d = 0.0;
    for (&pn, &qn) in p.probs.iter().zip(&q.probs) {
        if pn > 0.0 {
            d += pn * libm::log2(pn / qn.max(KL_FLOOR));
        }
    }
    Ok(d.max(0.0))
}

/// Smallest `M` with `2^{−M d} ≤ target_error`.
pub fn sample_complexity(d: f64, target_error: f64) -> Result<u64, OpenSystemError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(OpenSystemError::NoFiniteSamples(d));
    }
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(OpenSystemError::InvalidTarget(target_error));
    }
    let exact = -libm::log2(target_error) / d;
    // Absorb rounding so exact powers of two land on the integer.
    let m = libm::ceil(exact - 1e-9 * exact.max(1.0)).max(1.0);
    Ok(m as u64)
}

/// Samples of a density-matrix evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub eps: Vec<f64>,
    pub trace: Vec<f64>,
    pub purity: Vec<f64>,
    pub entropy: Vec<f64>,
    pub charge_profiles: Vec<Vec<f64>>,
    /// Configuration probabilities, aligned with `configs`.
    pub distributions: Vec<Vec<f64>>,
    pub configs: Vec<ChargeConfig>,
    /// `⟨φ_L(τ)|ρ|φ_L(τ)⟩` for the tracked label.
    pub fidelity: Option<Vec<f64>>,
    pub tracked: Option<StateLabel>,
    /// Density matrices at the samples (empty if not kept).
    pub states: Vec<DensityMatrix>,
    pub steps: usize,
}

impl DensityTrajectory {
    /// Charge distribution at sample `j`.
    pub fn distribution(&self, j: usize) -> ChargeDistribution {
        ChargeDistribution { configs: self.configs.clone(), probs: self.distributions[j].clone() }
    }

    pub fn final_distribution(&self) -> ChargeDistribution {
        self.distribution(self.times.len() - 1)
    }
}

/// Integrates the dephasing master equation over `schedule`.
///
/// `opts.tolerance` bounds the local error of each unitary step; dephasing
/// steps additionally keep `γh ≤ 10⁻²`.
pub fn evolve_lindblad(
    rho0: &DensityMatrix,
    solver: &SpectrumSolver,
    schedule: &TiltSchedule,
    gamma: f64,
    opts: &IntegratorOptions,
    track: Option<StateLabel>,
) -> Result<DensityTrajectory, OpenSystemError> {
    schedule.validate()?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(OpenSystemError::InvalidRate(gamma));
    }
    let h = solver.hamiltonian();
    let sector = solver.sector();
    let n = h.dim();
    if n > MAX_DENSITY_DIM {
        return Err(OpenSystemError::DimensionTooLarge { dim: n });
    }
    if rho0.dim != n {
        return Err(OpenSystemError::DimensionMismatch { expected: n, got: rho0.dim });
    }
    rho0.validate()?;

    let projectors = build_charge_projectors(sector);
    let labels = projector_labels(&projectors, n);
    let tilt = h.tilt_direction();
    let (dmin, dmax) = tilt.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    let centre = 0.5 * (dmin + dmax);
    let shifted: Vec<f64> = tilt.iter().map(|d| d - centre).collect();
    let spread = 0.5 * (dmax - dmin);
    let rate = schedule.eps_max / schedule.ramp_time;

    // Largest unitary step on the ramp from x² ≤ tolerance, x = r·spread·a².
    let ramp_step = if rate * spread > 0.0 {
        2.0 * libm::sqrt(libm::sqrt(opts.tolerance) / (rate * spread))
    } else {
        f64::INFINITY
    };
    let dephasing_step = if gamma > 0.0 { MAX_DEPHASING_PER_STEP / gamma } else { f64::INFINITY };
    let max_step = opts.max_step.min(dephasing_step);

    let times = opts.sample_times(schedule);
    let mut traj = DensityTrajectory {
        times: Vec::with_capacity(times.len()),
        eps: Vec::with_capacity(times.len()),
        trace: Vec::with_capacity(times.len()),
        purity: Vec::with_capacity(times.len()),
        entropy: Vec::with_capacity(times.len()),
        charge_profiles: Vec::with_capacity(times.len()),
        distributions: Vec::with_capacity(times.len()),
        configs: projectors.iter().map(|p| p.config.clone()).collect(),
        fidelity: track.map(|_| Vec::new()),
        tracked: track,
        states: Vec::new(),
        steps: 0,
    };

    let mut rho = rho0.clone();
    let mut guesses: Vec<Vec<f64>> = Vec::new();
    let mut hold_cache: Option<(f64, Vec<Complex64>)> = None;
    let mut hold_eigen = None;
    let mut tau = 0.0;
    let span = schedule.total_time().max(1.0);
    for &target in &times {
        while target - tau > 1e-12 * span {
            let on_ramp = tau < schedule.ramp_time * (1.0 - 1e-14);
            let limit = if on_ramp { target.min(schedule.ramp_time) - tau } else { target - tau };
            let step = if on_ramp { ramp_step.min(max_step) } else { max_step };
            let hstep = step.min(limit);
            // Snap to the limit when a tiny remainder would follow.
            let hstep = if limit - hstep < 1e-9 * span { limit } else { hstep };
            if gamma > 0.0 {
                dephase(&mut rho, &labels, libm::exp(-0.5 * gamma * hstep));
            }
            let u = if on_ramp {
                let centre_eps = schedule_epsilon(tau + 0.5 * hstep, schedule);
                ramp_propagator(h, centre_eps, rate, &shifted, 0.5 * hstep)
            } else {
                let eig = hold_eigen.get_or_insert_with(|| {
                    let op = h.at(schedule.eps_max);
                    symmetric_eigen(&op.to_dense(), n)
                });
                match &hold_cache {
                    Some((cached, u)) if *cached == hstep => u.clone(),
                    _ => {
                        let u = static_propagator(eig, hstep);
                        hold_cache = Some((hstep, u.clone()));
                        u
                    }
                }
            };
            conjugate(&mut rho, &u);
            if gamma > 0.0 {
                dephase(&mut rho, &labels, libm::exp(-0.5 * gamma * hstep));
            }
            tau += hstep;
            traj.steps += 1;
        }
        tau = tau.max(target);

        let eps = schedule_epsilon(target, schedule);
        let eig = hermitian_eigen(&rho.data, n);
        let low = eig.values.first().copied().unwrap_or(0.0);
        if low < -POSITIVITY_TOLERANCE {
            return Err(OpenSystemError::Positivity { time: target, eigenvalue: low });
        }
        if low < -1e-12 {
            rho.clip_negative();
        }
        traj.times.push(target);
        traj.eps.push(eps);
        traj.trace.push(rho.trace());
        traj.purity.push(rho.purity());
        traj.entropy.push(entropy_of(&eig.values));
        traj.charge_profiles.push(rho.charge_profile(sector));
        traj.distributions.push(charge_distribution(&rho, &projectors).probs);
        if let (Some(label), Some(f)) = (track, traj.fidelity.as_mut()) {
            let records = solver.solve_warm(eps, &guesses)?;
            let r = records.iter().find(|r| r.label() == label).ok_or(SpectralError::MissingState {
                label,
                eps,
                available: records.len(),
            })?;
            f.push(rho.expectation_real(&r.vector));
            guesses = records.into_iter().map(|r| r.vector).collect();
        }
        if opts.keep_states {
            traj.states.push(rho.clone());
        }
    }
    Ok(traj)
}

/// Multiplies coherences between different configurations by `factor`.
fn dephase(rho: &mut DensityMatrix, labels: &[usize], factor: f64) {
    let n = rho.dim;
    for i in 0..n {
        let row = &mut rho.data[i * n..(i + 1) * n];
        for (j, z) in row.iter_mut().enumerate() {
            if labels[i] != labels[j] {
                *z *= factor;
            }
        }
    }
}

/// `ρ ← U ρ U†`.
fn conjugate(rho: &mut DensityMatrix, u: &[Complex64]) {
    let n = rho.dim;
    let tmp = matmul(u, &rho.data, n);
    rho.data = matmul_adjoint(&tmp, u, n);
}

/// `exp(−i h H)` from an eigendecomposition, row-major.
fn static_propagator(eig: &crate::linalg::DenseEigen, h: f64) -> Vec<Complex64> {
    let n = eig.values.len();
    let phases: Vec<Complex64> = eig.values.iter().map(|l| Complex64::from_polar(1.0, -h * l)).collect();
    let mut u = vec![Complex64::default(); n * n];
    for (p, v) in phases.iter().zip(&eig.vectors) {
        for i in 0..n {
            let pi = p * v[i];
            let row = &mut u[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += pi * vj;
            }
        }
    }
    u
}

/// Propagator over `[τ_c − a, τ_c + a]` for `H(τ_c + s) = H(ε_c) + s·rate·D`.
fn ramp_propagator(
    h: &crate::model::Hamiltonian,
    eps_c: f64,
    rate: f64,
    shifted_tilt: &[f64],
    a: f64,
) -> Vec<Complex64> {
    let op = h.at(eps_c);
    let n = op.dim();
    let eig = symmetric_eigen(&op.to_dense(), n);
    // Rows of `x` are eigenvectors.
    let x: Vec<f64> = eig.vectors.iter().flat_map(|v| v.iter().copied()).collect();
    // D̃ = X D Xᵀ, then Ω₁ (real antisymmetric).
    let mut omega = vec![0.0; n * n];
    for j in 0..n {
        let xj = &x[j * n..(j + 1) * n];
        for k in j + 1..n {
            let xk = &x[k * n..(k + 1) * n];
            let mut d = 0.0;
            for i in 0..n {
                d += xj[i] * shifted_tilt[i] * xk[i];
            }
            let w = 2.0 * rate * d * drift_integral(eig.values[j] - eig.values[k], a);
            omega[j * n + k] = w;
            omega[k * n + j] = -w;
        }
    }
    let r = expm_small(&omega, n);
    // U = Xᵀ P R P X with P = diag(e^{−iλa}).
    let phases: Vec<Complex64> = eig.values.iter().map(|l| Complex64::from_polar(1.0, -a * l)).collect();
    let mut m = vec![Complex64::default(); n * n];
    for j in 0..n {
        for k in 0..n {
            m[j * n + k] = phases[j] * r[j * n + k] * phases[k];
        }
    }
    // t = M X
    let mut t = vec![Complex64::default(); n * n];
    for j in 0..n {
        let row = &mut t[j * n..(j + 1) * n];
        for k in 0..n {
            let c = m[j * n + k];
            let xk = &x[k * n..(k + 1) * n];
            for (o, xv) in row.iter_mut().zip(xk) {
                *o += c * xv;
            }
        }
    }
    // U = Xᵀ t
    let mut u = vec![Complex64::default(); n * n];
    for j in 0..n {
        let xj = &x[j * n..(j + 1) * n];
        let tj = &t[j * n..(j + 1) * n];
        for a_idx in 0..n {
            let c = xj[a_idx];
            if c == 0.0 {
                continue;
            }
            let row = &mut u[a_idx * n..(a_idx + 1) * n];
            for (o, tv) in row.iter_mut().zip(tj) {
                *o += tv * c;
            }
        }
    }
    u
}

/// `∫₀^a s sin(ω s) ds`, by series when `|ω a|` is small.
pub(crate) fn drift_integral(omega: f64, a: f64) -> f64 {
    let z = omega * a;
    if z.abs() < 0.5 {
        // Σ_k (−1)^k ω^{2k+1} a^{2k+3} / ((2k+1)! (2k+3))
        let mut term = omega * a * a * a; // ω a³ / 1!
        let mut sum = 0.0;
        let mut fact = 1.0;
        for k in 0..8 {
            sum += term / (fact * (2 * k + 3) as f64);
            term *= -z * z;
            fact *= ((2 * k + 2) * (2 * k + 3)) as f64;
        }
        sum
    } else {
        (libm::sin(z) - z * libm::cos(z)) / (omega * omega)
    }
}

/// `exp(A)` for a small real matrix by Taylor series.
fn expm_small(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    let mut term = a.to_vec();
    let mut k = 1.0;
    loop {
        let size = term.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t;
        }
        if size < 1e-18 || k > 30.0 {
            break;
        }
        k += 1.0;
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            let row = &mut next[i * n..(i + 1) * n];
            for l in 0..n {
                let c = term[i * n + l];
                if c == 0.0 {
                    continue;
                }
                for (o, al) in row.iter_mut().zip(&a[l * n..(l + 1) * n]) {
                    *o += c * al;
                }
            }
        }
        for v in next.iter_mut() {
            *v /= k;
        }
        term = next;
    }
    out
}

/// `A B` for row-major `n × n` complex matrices.
fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); n * n];
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for l in 0..n {
            let c = a[i * n + l];
            for (o, bl) in row.iter_mut().zip(&b[l * n..(l + 1) * n]) {
                *o += c * bl;
            }
        }
    }
    out
}

/// `A B†` for row-major `n × n` complex matrices.
fn matmul_adjoint(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); n * n];
    for i in 0..n {
        let ai = &a[i * n..(i + 1) * n];
        for j in 0..n {
            let bj = &b[j * n..(j + 1) * n];
            let mut acc = Complex64::default();
            for (x, y) in ai.iter().zip(bj) {
                acc += x * y.conj();
            }
            out[i * n + j] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_integral_branches_agree() {
        let a = 0.3;
        for omega in [1e-6, 0.5, 1.6, 1.7, 40.0] {
            // Midpoint quadrature oracle.
            let m = 200_000;
            let ds = a / m as f64;
            let q: f64 = (0..m).map(|i| (i as f64 + 0.5) * ds).map(|s| s * libm::sin(omega * s) * ds).sum();
            assert!((drift_integral(omega, a) - q).abs() < 1e-9 * (1.0 + q.abs()), "{omega}");
        }
        // Just below the branch switch the series must match the closed form.
        let omega = 0.5 / a - 1e-9;
        let closed = (libm::sin(omega * a) - omega * a * libm::cos(omega * a)) / (omega * omega);
        assert!((drift_integral(omega, a) - closed).abs() < 1e-15);
    }

    #[test]
    fn sample_counts() {
        assert_eq!(sample_complexity(1.0, libm::exp2(-10.0)).unwrap(), 10);
        assert_eq!(sample_complexity(10.0, libm::exp2(-10.0)).unwrap(), 1);
        assert!(sample_complexity(0.0, 0.5).is_err());
        assert!(sample_complexity(1.0, 1.0).is_err());
        // d > 1 with M of a few hundred gives error below 2⁻¹⁰⁰.
        assert!(sample_complexity(1.2, libm::exp2(-100.0)).unwrap() <= 100);
    }

    #[test]
    fn entropy_of_mixed_states() {
        assert!((von_neumann_entropy(&DensityMatrix::maximally_mixed(8)) - 3.0).abs() < 1e-12);
        let s = libm::sqrt(0.5);
        let pure = DensityMatrix::pure(&[Complex64::new(s, 0.0), Complex64::new(0.0, s)]);
        assert!(von_neumann_entropy(&pure).abs() < 1e-12);
        assert!((pure.purity() - 1.0).abs() < 1e-14);
    }
}
