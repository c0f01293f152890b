//! Schrödinger propagation under a linear tilt ramp followed by a hold.
//!
//! Steps use the fourth-order commutator-free Magnus integrator: with Gauss
//! nodes `c_{1,2} = ½ ∓ √3/6` and `H_i = H(ε(τ + c_i h))`,
//!
//! ```text
//! U(τ+h, τ) ≈ exp(−i h (a₋ H₁ + a₊ H₂)) · exp(−i h (a₊ H₁ + a₋ H₂)),   a± = ¼ ± √3/6
//! ```
//!
//! Because `H(ε) = H(0) + ε D` each exponent is `½ H(ε_eff)` for an effective
//! tilt, so every factor is the propagator of an ordinary Hamiltonian. Local
//! error is controlled by step doubling; during the hold `H` is constant and
//! is exponentiated exactly.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{chebyshev_expm, cnorm, krylov_expm, symmetric_eigen, DenseEigen, KrylovOptions, LinalgError, SymmetricOperator};
use crate::model::{ChargeProjector, Hamiltonian};
use crate::spectral::{EigenstateRecord, SpectralError, SpectrumSolver, StateLabel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("step size underflow at t = {time} (step {step:.3e})")]
    StepUnderflow { time: f64, step: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("initial state has dimension {got}, the sector has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("initial state has norm {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("no samples inside the window [{start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },
    #[error("adiabatic bound needs a positive gap, got {0}")]
    NonPositiveGap(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("propagation failed at t = {time}: {source}")]
    Propagation { time: f64, source: LinalgError },
}

/// Linear ramp `ε(τ) = (τ/T_max) ε_max` for `τ ≤ T_max`, then `ε_max` for
/// `hold` more time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSchedule {
    pub ramp_time: f64,
    pub eps_max: f64,
    pub hold: f64,
}

impl TiltSchedule {
    pub fn new(ramp_time: f64, eps_max: f64, hold: f64) -> Result<Self, DynamicsError> {
        let s = TiltSchedule { ramp_time, eps_max, hold };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.ramp_time > 0.0) || !self.ramp_time.is_finite() {
            return Err(DynamicsError::InvalidSchedule("ramp time must be positive and finite"));
        }
        if !self.eps_max.is_finite() || self.eps_max < 0.0 {
            return Err(DynamicsError::InvalidSchedule("final tilt must be finite and non-negative"));
        }
        if !self.hold.is_finite() || self.hold < 0.0 {
            return Err(DynamicsError::InvalidSchedule("hold must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        self.ramp_time + self.hold
    }

    /// Time at which the ramp reaches `eps` (clamped to the ramp).
    pub fn time_of(&self, eps: f64) -> f64 {
        if self.eps_max == 0.0 {
            return 0.0;
        }
        (eps / self.eps_max).clamp(0.0, 1.0) * self.ramp_time
    }
}

/// `ε(τ)` for the schedule.
pub fn schedule_epsilon(tau: f64, schedule: &TiltSchedule) -> f64 {
    if tau >= schedule.ramp_time {
        schedule.eps_max
    } else {
        (tau.max(0.0) / schedule.ramp_time) * schedule.eps_max
    }
}

/// Integrator and sampling controls.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    /// Local error bound per step (2-norm of the state).
    pub tolerance: f64,
    /// Largest step in units of `1/t`.
    pub max_step: f64,
    /// Smallest step before giving up.
    pub min_step: f64,
    /// Uniform samples over the whole run, endpoints included.
    pub samples: usize,
    /// Tilt windows `(ε_a, ε_b)` on the ramp that get extra samples.
    pub refine_windows: Vec<(f64, f64)>,
    /// Samples added inside each refine window.
    pub refine_samples: usize,
    /// Uniform samples added inside the hold.
    pub hold_samples: usize,
    /// Sectors up to this dimension propagate the hold densely.
    pub dense_limit: usize,
    /// Store the state at every sample.
    pub keep_states: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            tolerance: 1e-8,
            max_step: 10.0,
            min_step: 1e-9,
            samples: 500,
            refine_windows: Vec::new(),
            refine_samples: 200,
            hold_samples: 0,
            dense_limit: 256,
            keep_states: true,
        }
    }
}

impl IntegratorOptions {
    /// Defaults for density-matrix runs. Each step there costs a dense
    /// eigendecomposition. A tolerance of `1e-6` keeps the trace distance to
    /// the exact unitary evolution near `1e-7` over a few hundred `1/t` and
    /// near `1e-6` over a few thousand; tighten it for closer agreement.
    pub fn for_lindblad() -> Self {
        IntegratorOptions { tolerance: 1e-6, ..Self::default() }
    }

    /// Sorted, deduplicated sample times for `schedule`.
    pub fn sample_times(&self, schedule: &TiltSchedule) -> Vec<f64> {
        let total = schedule.total_time();
        let mut times = Vec::new();
        let n = self.samples.max(2);
        for i in 0..n {
            times.push(total * i as f64 / (n - 1) as f64);
        }
        for &(a, b) in &self.refine_windows {
            let (ta, tb) = (schedule.time_of(a.min(b)), schedule.time_of(a.max(b)));
            if tb > ta {
                let m = self.refine_samples.max(2);
                for i in 0..m {
                    times.push(ta + (tb - ta) * i as f64 / (m - 1) as f64);
                }
            }
        }
        if schedule.hold > 0.0 && self.hold_samples > 0 {
            let m = self.hold_samples.max(2);
            for i in 0..m {
                times.push(schedule.ramp_time + schedule.hold * i as f64 / (m - 1) as f64);
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * total.max(1.0));
        times
    }
}

/// Samples of a propagated state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub eps: Vec<f64>,
    /// States at the samples (empty if not kept).
    pub states: Vec<Vec<Complex64>>,
    pub charge_profiles: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub s_squared: Vec<f64>,
    /// `|⟨ψ(τ)|φ_L(τ)⟩|²` against the tracked instantaneous eigenstate.
    pub fidelity: Option<Vec<f64>>,
    pub tracked: Option<StateLabel>,
    /// Accepted integration steps.
    pub steps: usize,
}

impl StateTrajectory {
    /// Smallest sampled fidelity, if tracked.
    pub fn min_fidelity(&self) -> Option<(f64, f64)> {
        let f = self.fidelity.as_ref()?;
        f.iter().zip(&self.times).map(|(&f, &t)| (t, f)).min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub(crate) const CF4_NODES: (f64, f64) = (0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9);
pub(crate) const CF4_WEIGHTS: (f64, f64) = (0.25 + 0.288_675_134_594_812_9, 0.25 - 0.288_675_134_594_812_9);

/// Effective tilts of the two CF4 factors for the step `[τ, τ+h]`, in the
/// order they act on the state. Each factor is `exp(−i (h/2) H(ε_eff))`.
pub(crate) fn cf4_effective_tilts(schedule: &TiltSchedule, tau: f64, h: f64) -> (f64, f64) {
    let e1 = schedule_epsilon(tau + CF4_NODES.0 * h, schedule);
    let e2 = schedule_epsilon(tau + CF4_NODES.1 * h, schedule);
    let (big, small) = CF4_WEIGHTS;
    (2.0 * (big * e1 + small * e2), 2.0 * (small * e1 + big * e2))
}

/// Applies `exp(−i θ H(ε))`: Chebyshev for ramp steps; for the hold, exactly
/// from a cached eigendecomposition or by Krylov projection.
#[derive(Debug)]
pub(crate) struct Exponentiator<'a> {
    h: &'a Hamiltonian,
    dense: bool,
    cache: BTreeMap<u64, DenseEigen>,
    krylov: KrylovOptions,
}

impl<'a> Exponentiator<'a> {
    pub(crate) fn new(h: &'a Hamiltonian, dense_limit: usize, tolerance: f64) -> Self {
        Exponentiator {
            h,
            dense: h.dim() <= dense_limit,
            cache: BTreeMap::new(),
            krylov: KrylovOptions { max_dim: 40, tolerance: (tolerance * 1e-6).max(1e-15) },
        }
    }

    pub(crate) fn eigen(&mut self, eps: f64) -> &DenseEigen {
        let key = eps.to_bits();
        if !self.cache.contains_key(&key) {
            if self.cache.len() >= 4 {
                self.cache.clear();
            }
            let op = self.h.at(eps);
            self.cache.insert(key, symmetric_eigen(&op.to_dense(), op.dim()));
        }
        &self.cache[&key]
    }

    /// `exp(−i θ H(eps)) ψ` for a short step, by Chebyshev expansion.
    pub(crate) fn apply(&mut self, eps: f64, theta: f64, psi: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        Ok(chebyshev_expm(&self.h.at(eps), theta, psi, self.krylov.tolerance))
    }

    /// As [`apply`](Self::apply) for a tilt that recurs (the hold): small
    /// sectors keep its eigendecomposition and propagate exactly.
    pub(crate) fn apply_repeated(&mut self, eps: f64, theta: f64, psi: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if self.dense {
            Ok(apply_dense(self.eigen(eps), theta, psi))
        } else {
            krylov_expm(&self.h.at(eps), theta, psi, &self.krylov)
        }
    }
}

fn apply_dense(eig: &DenseEigen, theta: f64, psi: &[Complex64]) -> Vec<Complex64> {
    let n = psi.len();
    let mut out = vec![Complex64::default(); n];
    for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
        let mut proj = Complex64::default();
        for (vi, pi) in v.iter().zip(psi) {
            proj += pi * vi;
        }
        let c = proj * Complex64::from_polar(1.0, -theta * lambda);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += c * vi;
        }
    }
    out
}

fn cf4_step(
    ex: &mut Exponentiator<'_>,
    schedule: &TiltSchedule,
    tau: f64,
    h: f64,
    psi: &[Complex64],
) -> Result<Vec<Complex64>, LinalgError> {
    let (ea, eb) = cf4_effective_tilts(schedule, tau, h);
    let mid = ex.apply(ea, 0.5 * h, psi)?;
    ex.apply(eb, 0.5 * h, &mid)
}

/// Per-site `⟨n_k⟩` of a complex state.
pub fn state_charge_profile(psi: &[Complex64], sector: &crate::fock::BasisSector) -> Vec<f64> {
    let n = sector.sites();
    let mut out = vec![0.0; n];
    for (amp, b) in psi.iter().zip(sector.states()) {
        let w = amp.norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += w * b.occupancy(k) as f64;
        }
    }
    out
}

/// `|⟨ψ|φ⟩|²` with the eigenvector `label` of `H(eps)`.
pub fn instantaneous_fidelity(
    psi: &[Complex64],
    solver: &SpectrumSolver,
    eps: f64,
    label: StateLabel,
) -> Result<f64, DynamicsError> {
    let records = solver.solve(eps)?;
    let record = find_label(&records, label, eps)?;
    Ok(overlap_sq(psi, &record.vector))
}

fn find_label(records: &[EigenstateRecord], label: StateLabel, eps: f64) -> Result<&EigenstateRecord, SpectralError> {
    records.iter().find(|r| r.label() == label).ok_or(SpectralError::MissingState {
        label,
        eps,
        available: records.len(),
    })
}

fn overlap_sq(psi: &[Complex64], v: &[f64]) -> f64 {
    let mut acc = Complex64::default();
    for (p, x) in psi.iter().zip(v) {
        acc += p.conj() * x;
    }
    acc.norm_sqr()
}

/// Promotes a real eigenvector to a complex state.
pub fn complex_state(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Integrates `i dψ/dτ = H(ε(τ)) ψ` over the whole schedule.
///
/// When `track` is set, every sample also records the fidelity with the
/// instantaneous eigenstate carrying that label.
pub fn evolve_state(
    psi0: &[Complex64],
    solver: &SpectrumSolver,
    schedule: &TiltSchedule,
    opts: &IntegratorOptions,
    track: Option<StateLabel>,
) -> Result<StateTrajectory, DynamicsError> {
    schedule.validate()?;
    let h = solver.hamiltonian();
    let sector = solver.sector();
    if psi0.len() != h.dim() {
        return Err(DynamicsError::DimensionMismatch { expected: h.dim(), got: psi0.len() });
    }
    let norm0 = cnorm(psi0);
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(DynamicsError::NotNormalized { norm: norm0 });
    }
    let times = opts.sample_times(schedule);
    let mut ex = Exponentiator::new(h, opts.dense_limit, opts.tolerance);
    let s2 = solver.spin_squared();

    let mut traj = StateTrajectory {
        times: Vec::with_capacity(times.len()),
        eps: Vec::with_capacity(times.len()),
        states: Vec::new(),
        charge_profiles: Vec::with_capacity(times.len()),
        norms: Vec::with_capacity(times.len()),
        s_squared: Vec::with_capacity(times.len()),
        fidelity: track.map(|_| Vec::with_capacity(times.len())),
        tracked: track,
        steps: 0,
    };
    let mut guesses: Vec<Vec<f64>> = Vec::new();
    let mut record = |traj: &mut StateTrajectory, tau: f64, psi: &[Complex64]| -> Result<(), DynamicsError> {
        let eps = schedule_epsilon(tau, schedule);
        traj.times.push(tau);
        traj.eps.push(eps);
        traj.charge_profiles.push(state_charge_profile(psi, sector));
        traj.norms.push(cnorm(psi));
        traj.s_squared.push(s2.expectation_complex(psi));
        if let (Some(label), Some(f)) = (track, traj.fidelity.as_mut()) {
            let records = solver.solve_warm(eps, &guesses)?;
            let r = find_label(&records, label, eps)?;
            f.push(overlap_sq(psi, &r.vector));
            guesses = records.into_iter().map(|r| r.vector).collect();
        }
        if opts.keep_states {
            traj.states.push(psi.to_vec());
        }
        Ok(())
    };

    let mut psi = psi0.to_vec();
    let mut tau = 0.0;
    let mut step = opts.max_step.min(schedule.ramp_time);
    let ramp_end = schedule.ramp_time;
    for &target in &times {
        while target - tau > 1e-12 * schedule.total_time().max(1.0) {
            if tau >= ramp_end - 1e-12 * ramp_end {
                // Constant Hamiltonian: exact propagation to the target.
                psi = ex
                    .apply_repeated(schedule.eps_max, target - tau, &psi)
                    .map_err(|source| DynamicsError::Propagation { time: tau, source })?;
                tau = target;
                traj.steps += 1;
                continue;
            }
            let limit = target.min(ramp_end) - tau;
            let h_try = step.min(limit);
            let prop = |ex: &mut Exponentiator<'_>, t: f64, h: f64, s: &[Complex64]| {
                cf4_step(ex, schedule, t, h, s).map_err(|source| DynamicsError::Propagation { time: t, source })
            };
            let full = prop(&mut ex, tau, h_try, &psi)?;
            let half = prop(&mut ex, tau, 0.5 * h_try, &psi)?;
            let half = prop(&mut ex, tau + 0.5 * h_try, 0.5 * h_try, &half)?;
            let err = libm::sqrt(full.iter().zip(&half).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>());
            let factor = if err == 0.0 { 2.0 } else { (0.9 * libm::pow(opts.tolerance / err, 0.2)).clamp(0.2, 2.0) };
            if err <= opts.tolerance {
                psi = half;
                tau += h_try;
                traj.steps += 1;
                if h_try == limit && h_try < step {
                    // Clipped to a sample; keep the step unless the error asks
                    // for a smaller one.
                    step = step.min(h_try * factor).max(step.min(opts.max_step));
                } else {
                    step = (h_try * factor).min(opts.max_step);
                }
            } else {
                step = h_try * factor;
                if step < opts.min_step {
                    return Err(DynamicsError::StepUnderflow { time: tau, step });
                }
            }
        }
        tau = tau.max(target);
        record(&mut traj, target, &psi)?;
    }
    Ok(traj)
}

/// Mean per-site occupation over samples in `[start, end]`, weighted by the
/// time each sample represents (trapezoidal), so refined sampling does not
/// bias the average.
pub fn time_averaged_charge(traj: &StateTrajectory, start: f64, end: f64) -> Result<Vec<f64>, DynamicsError> {
    let idx: Vec<usize> = (0..traj.times.len()).filter(|&i| traj.times[i] >= start && traj.times[i] <= end).collect();
    if idx.is_empty() {
        return Err(DynamicsError::EmptyWindow { start, end });
    }
    let weights = trapezoid_weights(&idx.iter().map(|&i| traj.times[i]).collect::<Vec<_>>());
    let sites = traj.charge_profiles[idx[0]].len();
    let mut out = vec![0.0; sites];
    for (&i, w) in idx.iter().zip(&weights) {
        for (o, x) in out.iter_mut().zip(&traj.charge_profiles[i]) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Time-averaged charge-configuration probabilities over `[start, end]`,
/// aligned with `projectors`. Needs stored states.
pub fn time_averaged_distribution(
    traj: &StateTrajectory,
    start: f64,
    end: f64,
    projectors: &[ChargeProjector],
) -> Result<Vec<f64>, DynamicsError> {
    let idx: Vec<usize> = (0..traj.times.len())
        .filter(|&i| traj.times[i] >= start && traj.times[i] <= end && i < traj.states.len())
        .collect();
    if idx.is_empty() {
        return Err(DynamicsError::EmptyWindow { start, end });
    }
    let weights = trapezoid_weights(&idx.iter().map(|&i| traj.times[i]).collect::<Vec<_>>());
    let mut out = vec![0.0; projectors.len()];
    for (&i, w) in idx.iter().zip(&weights) {
        let psi = &traj.states[i];
        for (o, p) in out.iter_mut().zip(projectors) {
            *o += w * p.members.iter().map(|&m| psi[m].norm_sqr()).sum::<f64>();
        }
    }
    Ok(out)
}

/// Normalised trapezoid weights; equal weights for a single sample.
fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n == 1 || times[n - 1] <= times[0] {
        return vec![1.0 / n as f64; n];
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let dt = 0.5 * (times[i + 1] - times[i]);
        w[i] += dt;
        w[i + 1] += dt;
    }
    let total = times[n - 1] - times[0];
    w.iter().map(|x| x / total).collect()
}

/// Adiabaticity scale `1/ΔE²` in units of `1/t`.
pub fn adiabatic_time_bound(gap: f64) -> Result<f64, DynamicsError> {
    if !(gap > 0.0) {
        return Err(DynamicsError::NonPositiveGap(gap));
    }
    Ok(1.0 / (gap * gap))
}
