//! The tilted Fermi-Hubbard Hamiltonian, lattice geometries, total spin and
//! charge-configuration projectors.
//!
//! ```text
//! H = t Σ_{⟨k,l⟩,σ} (c†_{kσ} c_{lσ} + h.c.) + Σ_k ε̃_k n_k
//!     + V Σ_{⟨k,l⟩} n_k n_l + (U/2) Σ_k n_k (n_k − 1)
//! ```

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{apply_hop, apply_ladder, BasisSector, FockError, FockState, Spin, MAX_SITES};
use crate::linalg::SymmetricOperator;
use crate::sparse::{gershgorin, SparseHermitianOperator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter {field} = {value} is invalid: {reason}")]
    InvalidParameter { field: &'static str, value: f64, reason: &'static str },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("geometry has {geometry} sites but the sector has {sector}")]
    SiteMismatch { geometry: usize, sector: usize },
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Energies of the model in units of `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    /// Sign in front of the hopping term, `+1` or `−1`.
    pub hop_sign: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { t: 1.0, u: 40.0, v: 10.0, hop_sign: 1.0 }
    }
}

impl ModelParams {
    pub fn new(t: f64, u: f64, v: f64) -> Self {
        ModelParams { t, u, v, hop_sign: 1.0 }
    }

    /// Checks `t ≥ 0`, `U ≥ 0`, `V ≥ 0`, finiteness and `hop_sign = ±1`.
    ///
    /// `t = 0` is accepted so the classical limit stays reachable.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [("t", self.t), ("U", self.u), ("V", self.v)] {
            if !value.is_finite() {
                return Err(ModelError::InvalidParameter { field, value, reason: "must be finite" });
            }
            if value < 0.0 {
                return Err(ModelError::InvalidParameter { field, value, reason: "must be non-negative" });
            }
        }
        if self.hop_sign != 1.0 && self.hop_sign != -1.0 {
            return Err(ModelError::InvalidParameter {
                field: "hop_sign",
                value: self.hop_sign,
                reason: "must be +1 or -1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryKind {
    /// Open chain.
    Chain,
    /// Two-leg ladder with `cols` rungs.
    Ladder { cols: usize },
}

/// Sites and nearest-neighbour bonds.
///
/// Ladder sites run around the ring: the first row left to right (`0..C`),
/// the second row right to left (`C..2C`), so column `j` holds sites `j` and
/// `2C − 1 − j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Geometry {
    kind: GeometryKind,
    sites: usize,
    edges: Vec<(usize, usize)>,
}

impl Geometry {
    /// Open chain of an even number `n ≥ 2` of sites.
    pub fn chain(n: usize) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::InvalidGeometry("a chain needs at least 2 sites"));
        }
        if n % 2 != 0 {
            return Err(ModelError::InvalidGeometry("a chain needs an even number of sites"));
        }
        if n > MAX_SITES {
            return Err(ModelError::Fock(FockError::TooManySites { sites: n }));
        }
        Ok(Geometry { kind: GeometryKind::Chain, sites: n, edges: (0..n - 1).map(|k| (k, k + 1)).collect() })
    }

    /// `2 × cols` ladder; `cols = 2` is the four-site ring.
    pub fn ladder(cols: usize) -> Result<Self, ModelError> {
        if cols < 2 {
            return Err(ModelError::InvalidGeometry("a ladder needs at least 2 columns"));
        }
        let sites = 2 * cols;
        if sites > MAX_SITES {
            return Err(ModelError::Fock(FockError::TooManySites { sites }));
        }
        let mut edges = Vec::with_capacity(3 * cols - 2);
        for j in 0..cols - 1 {
            edges.push((j, j + 1));
        }
        for j in 0..cols - 1 {
            edges.push((cols + j, cols + j + 1));
        }
        for j in 0..cols {
            edges.push((j, sites - 1 - j));
        }
        Ok(Geometry { kind: GeometryKind::Ladder { cols }, sites, edges })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The half-filled `S^z = 0` sector of this lattice.
    pub fn half_filled_sector(&self) -> Result<BasisSector, ModelError> {
        Ok(BasisSector::half_filled(self.sites)?)
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GeometryKind::Chain => write!(f, "chain({})", self.sites),
            GeometryKind::Ladder { cols } => write!(f, "ladder(2x{cols})"),
        }
    }
}

/// Per-site potentials `ε̃_k` in units of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltProfile(pub Vec<f64>);

impl TiltProfile {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Site potentials for tilt strength `epsilon`: a linear ramp along a chain,
/// and a ramp along the ladder axis that is uniform within each column.
pub fn tilt_profile(geometry: &Geometry, epsilon: f64) -> TiltProfile {
    let n = geometry.sites;
    let mut p = vec![0.0; n];
    match geometry.kind {
        GeometryKind::Chain => {
            for (k, pk) in p.iter_mut().enumerate() {
                *pk = k as f64 * epsilon;
            }
        }
        GeometryKind::Ladder { cols } => {
            for j in 0..cols {
                p[j] = j as f64 * epsilon;
                p[n - 1 - j] = j as f64 * epsilon;
            }
        }
    }
    TiltProfile(p)
}

/// `H(ε) = H(0) + ε·D` with `D = Σ_k ε̃_k(1) n_k` diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    base: SparseHermitianOperator,
    tilt_diag: Vec<f64>,
    tilt_max: f64,
    radii: Vec<f64>,
    base_bound: f64,
}

impl Hamiltonian {
    /// Assembles the tilt-independent part and the tilt direction.
    pub fn new(geometry: &Geometry, params: &ModelParams, sector: &BasisSector) -> Result<Self, ModelError> {
        params.validate()?;
        if geometry.sites != sector.sites() {
            return Err(ModelError::SiteMismatch { geometry: geometry.sites, sector: sector.sites() });
        }
        let unit = tilt_profile(geometry, 1.0);
        let n = geometry.sites;
        let dim = sector.dim();
        let mut diag = Vec::with_capacity(dim);
        let mut tilt_diag: Vec<f64> = Vec::with_capacity(dim);
        let mut triplets = Vec::new();
        let amplitude = params.hop_sign * params.t;
        for (i, &b) in sector.states().iter().enumerate() {
            let occ: Vec<f64> = (0..n).map(|k| b.occupancy(k) as f64).collect();
            let onsite: f64 = occ.iter().map(|nk| 0.5 * params.u * nk * (nk - 1.0)).sum();
            let coulomb: f64 = geometry.edges.iter().map(|&(k, l)| params.v * occ[k] * occ[l]).sum();
            diag.push(onsite + coulomb);
            tilt_diag.push(occ.iter().zip(&unit.0).map(|(nk, e)| nk * e).sum());
            if amplitude == 0.0 {
                continue;
            }
            for &(k, l) in &geometry.edges {
                for spin in Spin::BOTH {
                    for (from, to) in [(k, l), (l, k)] {
                        if let Some((image, sign)) = apply_hop(b, from, to, spin) {
                            let j = sector.index_of(image).expect("hopping stays in the sector");
                            if j > i {
                                triplets.push((i, j, amplitude * sign as f64));
                            }
                        }
                    }
                }
            }
        }
        let tilt_max = tilt_diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let base = SparseHermitianOperator::from_triplets(diag, triplets);
        let radii = base.off_diagonal_radii();
        let base_bound = base.norm_bound();
        Ok(Hamiltonian { base, tilt_diag, tilt_max, radii, base_bound })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `H(0)`.
    pub fn base(&self) -> &SparseHermitianOperator {
        &self.base
    }

    /// Diagonal of `D = ∂H/∂ε`.
    pub fn tilt_direction(&self) -> &[f64] {
        &self.tilt_diag
    }

    /// Lightweight view of `H(ε)` usable as an operator.
    pub fn at(&self, epsilon: f64) -> HamiltonianAt<'_> {
        HamiltonianAt { h: self, epsilon }
    }

    /// Materialised `H(ε)`.
    pub fn matrix(&self, epsilon: f64) -> SparseHermitianOperator {
        let diag = self.base.diagonal().iter().zip(&self.tilt_diag).map(|(d, e)| d + epsilon * e).collect();
        SparseHermitianOperator::from_triplets(diag, self.base.upper_entries())
    }
}

/// `H(ε)` applied without materialising it.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianAt<'a> {
    h: &'a Hamiltonian,
    epsilon: f64,
}

impl HamiltonianAt<'_> {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl SymmetricOperator for HamiltonianAt<'_> {
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.h.base.apply_shifted(Some((self.epsilon, &self.h.tilt_diag)), x, y)
    }
    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.h.base.apply_complex_shifted(Some((self.epsilon, &self.h.tilt_diag)), x, y)
    }
    fn diagonal(&self, i: usize) -> f64 {
        self.h.base.diagonal()[i] + self.epsilon * self.h.tilt_diag[i]
    }
    fn norm_bound(&self) -> f64 {
        self.h.base_bound + self.epsilon.abs() * self.h.tilt_max
    }
    fn spectral_interval(&self) -> (f64, f64) {
        gershgorin(self.h.base.diagonal(), &self.h.radii, self.epsilon, &self.h.tilt_diag)
    }
    fn to_dense(&self) -> Vec<f64> {
        let n = self.h.dim();
        let mut a = self.h.base.to_dense();
        for i in 0..n {
            a[i * n + i] += self.epsilon * self.h.tilt_diag[i];
        }
        a
    }
}

/// `H(ε)` over `sector` as a sparse operator.
pub fn build_hamiltonian(
    geometry: &Geometry,
    params: &ModelParams,
    epsilon: f64,
    sector: &BasisSector,
) -> Result<SparseHermitianOperator, ModelError> {
    Ok(Hamiltonian::new(geometry, params, sector)?.matrix(epsilon))
}

/// Total spin `S²` over `sector`; eigenvalues are `S(S+1)`.
///
/// Built from `S² = (S^z)² + ½ Σ_{k,l} (S⁺_k S⁻_l + S⁻_k S⁺_l)` with
/// `S⁺_k = c†_{k↑} c_{k↓}`, every product composed from elementary
/// creation and annihilation operators so the fermionic signs are explicit.
pub fn build_spin_squared(sector: &BasisSector) -> SparseHermitianOperator {
    let n = sector.sites();
    let dim = sector.dim();
    let mut diag = vec![0.0; dim];
    let mut triplets = Vec::new();
    for (i, &b) in sector.states().iter().enumerate() {
        let sz = 0.5 * (b.n_up() as f64 - b.n_down() as f64);
        diag[i] += sz * sz;
        for k in 0..n {
            for l in 0..n {
                // S⁺_k S⁻_l and S⁻_k S⁺_l, each weighted by ½.
                for raise_first in [true, false] {
                    let (hi, lo) = if raise_first { (Spin::Up, Spin::Down) } else { (Spin::Down, Spin::Up) };
                    // Rightmost factor first: S^∓_l = c†_{l,lo} c_{l,hi}.
                    let steps = [(l, hi, false), (l, lo, true), (k, lo, false), (k, hi, true)];
                    if let Some((image, sign)) = apply_sequence(b, n, &steps) {
                        let j = sector.index_of(image).expect("spin flips stay in the sector");
                        let value = 0.5 * sign as f64;
                        if j == i {
                            diag[i] += value;
                        } else if j > i {
                            triplets.push((i, j, value));
                        }
                    }
                }
            }
        }
    }
    SparseHermitianOperator::from_triplets(diag, triplets)
}

fn apply_sequence(state: FockState, sites: usize, steps: &[(usize, Spin, bool)]) -> Option<(FockState, i8)> {
    steps.iter().try_fold((state, 1i8), |(s, sign), &(site, spin, create)| {
        apply_ladder(s, sites, site, spin, create).map(|(next, f)| (next, sign * f))
    })
}

/// Per-site occupations `(n_1, …, n_N)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChargeConfig(pub Vec<u8>);

impl ChargeConfig {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn sites(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for ChargeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str(")")
    }
}

impl core::str::FromStr for ChargeConfig {
    type Err = &'static str;

    /// Parses `(2,1,1,0)`, `2,1,1,0` or `2110`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')');
        let digits: Vec<u8> = if body.contains(',') {
            body.split(',')
                .map(|p| p.trim().parse::<u8>().map_err(|_| "occupations must be integers"))
                .collect::<Result<_, _>>()?
        } else {
            body.chars().map(|c| c.to_digit(10).map(|d| d as u8).ok_or("occupations must be digits")).collect::<Result<_, _>>()?
        };
        if digits.is_empty() {
            return Err("empty charge configuration");
        }
        if digits.iter().any(|&d| d > 2) {
            return Err("site occupations must be 0, 1 or 2");
        }
        Ok(ChargeConfig(digits))
    }
}

/// Projector `L_n = Σ_b |b⟩⟨b|` over the basis states with configuration `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargeProjector {
    pub config: ChargeConfig,
    /// Basis indices of the member states, ascending.
    pub members: Vec<usize>,
}

impl ChargeProjector {
    pub fn rank(&self) -> usize {
        self.members.len()
    }
}

/// One projector per charge configuration present in `sector`, ordered
/// lexicographically by configuration.
pub fn build_charge_projectors(sector: &BasisSector) -> Vec<ChargeProjector> {
    let mut groups: BTreeMap<ChargeConfig, Vec<usize>> = BTreeMap::new();
    for (i, &b) in sector.states().iter().enumerate() {
        groups.entry(ChargeConfig(b.occupations(sector.sites()))).or_default().push(i);
    }
    groups.into_iter().map(|(config, members)| ChargeProjector { config, members }).collect()
}

/// For every basis index, the position of its projector in `projectors`.
pub fn projector_labels(projectors: &[ChargeProjector], dim: usize) -> Vec<usize> {
    let mut labels = vec![usize::MAX; dim];
    for (p, proj) in projectors.iter().enumerate() {
        for &m in &proj.members {
            labels[m] = p;
        }
    }
    labels
}
