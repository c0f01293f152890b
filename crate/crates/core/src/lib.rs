//! Numerical core for certifying Fermi-Hubbard quantum simulators through
//! tilt-driven spin-to-charge conversion.
//!
//! The crate is `no_std` (it only needs `alloc`). It covers:
//!
//! * [`fock`]: occupation-number basis states and fixed-(N↑, N↓) sectors;
//! * [`model`]: the tilted Hubbard Hamiltonian, total spin and charge projectors;
//! * [`spectral`]: low-energy eigenstates, tilt sweeps, anti-crossings, gaps;
//! * [`dynamics`]: Schrödinger propagation under a linear tilt ramp;
//! * [`opensys`]: Lindblad evolution with charge dephasing, entropies, KL distance;
//! * [`certify`]: tilt planning, outcome classification and protocol simulation.
//!
//! Energies are in units of the tunnelling `t`, times in units of `1/t`, ħ = 1.
#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod certify;
pub mod dynamics;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod opensys;
pub mod sparse;
pub mod spectral;

pub use num_complex::Complex64;

pub use certify::{
    classify_outcome, hyperfine_mixing_rate, plan_tilts, simulate_protocol, CertificationPlan,
    CertifyError, Classification, ConfusionMatrix, ExpectationMode, ExpectationTable, PlanOptions,
};
pub use dynamics::{
    evolve_state, instantaneous_fidelity, schedule_epsilon, time_averaged_charge,
    DynamicsError, IntegratorOptions, StateTrajectory, TiltSchedule,
};
pub use fock::{apply_hop, enumerate_sector, occupancy, BasisSector, FockError, FockState, Spin};
pub use model::{
    build_charge_projectors, build_hamiltonian, build_spin_squared, tilt_profile, ChargeConfig,
    ChargeProjector, Geometry, GeometryKind, Hamiltonian, ModelError, ModelParams, TiltProfile,
};
pub use opensys::{
    charge_distribution, evolve_lindblad, kl_distance, sample_complexity, von_neumann_entropy,
    ChargeDistribution, DensityMatrix, DensityTrajectory, OpenSystemError,
};
pub use sparse::SparseHermitianOperator;
pub use spectral::{
    charge_profile, detect_anticrossings, low_spectrum, min_gap, sweep_spectrum,
    EigenstateRecord, SpectralError, SpectrumOptions, SpectrumSolver, StateLabel, SweepTable,
};
