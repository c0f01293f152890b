//! Low-energy spectra with total-spin labels, tilt sweeps, anti-crossings and
//! minimum same-spin gaps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::fock::BasisSector;
use crate::linalg::{
    davidson_lowest, dot, lanczos_lowest, symmetric_eigen, EigenPairs, IterativeOptions, LinalgError,
    SymmetricOperator,
};
use crate::model::{Geometry, Hamiltonian, ModelError, ModelParams};
use crate::sparse::SparseHermitianOperator;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("eigensolver failed at eps = {eps}: {source}")]
    Solver { eps: f64, source: LinalgError },
    #[error("<S^2> = {s_squared} at E = {energy} is not of the form S(S+1)")]
    SpinLabel { energy: f64, s_squared: f64 },
    #[error("state {label} not found among the {available} lowest states at eps = {eps}")]
    MissingState { label: StateLabel, eps: f64, available: usize },
    #[error("tilt grid is empty")]
    EmptyGrid,
    #[error("tilt grid must be strictly increasing (entry {index})")]
    GridNotAscending { index: usize },
    #[error("sweep has fewer than two states with label prefix {0}")]
    NotEnoughStates(StateLabel),
}

/// A spin multiplet and the energy rank of a state inside it: `S1`, `T2`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateLabel {
    /// `2S`.
    pub twice_spin: u32,
    /// Energy rank among states of the same spin, starting at 1.
    pub rank: usize,
}

impl StateLabel {
    pub const fn new(twice_spin: u32, rank: usize) -> Self {
        StateLabel { twice_spin, rank }
    }

    pub const fn singlet(rank: usize) -> Self {
        StateLabel::new(0, rank)
    }

    pub const fn triplet(rank: usize) -> Self {
        StateLabel::new(2, rank)
    }

    pub fn spin(&self) -> f64 {
        self.twice_spin as f64 / 2.0
    }
}

const MULTIPLET_LETTERS: [&str; 5] = ["S", "D", "T", "Qr", "Q"];

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match MULTIPLET_LETTERS.get(self.twice_spin as usize) {
            Some(letter) => write!(f, "{letter}{}", self.rank),
            None => write!(f, "M{}_{}", self.twice_spin + 1, self.rank),
        }
    }
}

impl FromStr for StateLabel {
    type Err = String;

    /// Parses `S1`, `T2`, `Q1` (quintet), `D1`, `Qr1` or `M7_1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || alloc::format!("unrecognised state label {s:?}");
        let (twice, digits) = if let Some(rest) = s.strip_prefix('M') {
            let (mult, rank) = rest.split_once('_').ok_or_else(bad)?;
            let mult: u32 = mult.parse().map_err(|_| bad())?;
            if mult == 0 {
                return Err(bad());
            }
            (mult - 1, rank)
        } else {
            let split = s.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
            let (letters, digits) = s.split_at(split);
            let twice = MULTIPLET_LETTERS.iter().position(|&l| l == letters).ok_or_else(bad)?;
            (twice as u32, digits)
        };
        let rank: usize = digits.parse().map_err(|_| bad())?;
        if rank == 0 {
            return Err(bad());
        }
        Ok(StateLabel::new(twice, rank))
    }
}

/// One labelled eigenstate.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenstateRecord {
    pub energy: f64,
    /// Unit-norm amplitudes over the sector; empty when a sweep discards them.
    pub vector: Vec<f64>,
    pub s_squared: f64,
    pub twice_spin: u32,
    pub spin_rank: usize,
    pub charge_profile: Vec<f64>,
    /// Residual `‖Hv − Ev‖` reported by the solver.
    pub residual: f64,
}

impl EigenstateRecord {
    pub fn label(&self) -> StateLabel {
        StateLabel::new(self.twice_spin, self.spin_rank)
    }

    pub fn total_spin(&self) -> f64 {
        self.twice_spin as f64 / 2.0
    }
}

/// `⟨n_k⟩ = Σ_b |v_b|² n_k(b)`.
pub fn charge_profile(vector: &[f64], sector: &BasisSector) -> Vec<f64> {
    let n = sector.sites();
    let mut out = vec![0.0; n];
    for (amp, b) in vector.iter().zip(sector.states()) {
        let w = amp * amp;
        if w == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += w * b.occupancy(k) as f64;
        }
    }
    out
}

/// Eigensolver and labelling controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumOptions {
    /// Number of lowest states to report.
    pub k: usize,
    /// Residual target relative to the operator norm bound.
    pub tolerance: f64,
    /// Dimensions up to this use dense diagonalisation for cold solves.
    pub dense_limit: usize,
    /// Dimensions above this use warm-started Davidson when guesses exist.
    pub warm_dense_limit: usize,
    /// States that must be present; `k` grows until they are.
    pub required: Vec<StateLabel>,
    /// Operator-application cap for iterative solves.
    pub max_matvecs: usize,
    pub seed: u64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            k: 6,
            tolerance: 1e-9,
            dense_limit: 1000,
            warm_dense_limit: 256,
            required: Vec::new(),
            max_matvecs: 20_000,
            seed: 0x5eed,
        }
    }
}

impl SpectrumOptions {
    pub fn with_k(k: usize) -> Self {
        SpectrumOptions { k, ..Self::default() }
    }

    /// Requires the first two singlets and triplets.
    pub fn requiring_lowest_pairs(mut self) -> Self {
        for label in [StateLabel::singlet(1), StateLabel::singlet(2), StateLabel::triplet(1), StateLabel::triplet(2)] {
            if !self.required.contains(&label) {
                self.required.push(label);
            }
        }
        self
    }
}

/// Extra pairs computed beyond `k` so that multiplets straddling the cut-off
/// do not contaminate the reported states.
const GUARD_PAIRS: usize = 2;

/// Relative energy spread below which eigenpairs form one degenerate cluster.
const CLUSTER_TOL: f64 = 1e-9;

/// Lowest `k` eigenstates of `h`, labelled by total spin.
///
/// All computed vectors are rotated jointly: first into `S²` eigenvectors,
/// then into `H` eigenvectors within each spin block, so accidental
/// degeneracies between different multiplets never mix labels.
pub fn low_spectrum<A: SymmetricOperator + ?Sized>(
    h: &A,
    s2: &SparseHermitianOperator,
    sector: &BasisSector,
    opts: &SpectrumOptions,
) -> Result<Vec<EigenstateRecord>, SpectralError> {
    low_spectrum_from(h, s2, sector, opts, &[], f64::NAN)
}

fn low_spectrum_from<A: SymmetricOperator + ?Sized>(
    h: &A,
    s2: &SparseHermitianOperator,
    sector: &BasisSector,
    opts: &SpectrumOptions,
    guesses: &[Vec<f64>],
    eps: f64,
) -> Result<Vec<EigenstateRecord>, SpectralError> {
    let dim = h.dim();
    let mut k = opts.k.min(dim);
    loop {
        let solve_k = (k + GUARD_PAIRS).min(dim);
        let pairs = solve(h, solve_k, opts, guesses).map_err(|source| SpectralError::Solver { eps, source })?;
        let mut records = label_pairs(h, s2, sector, pairs)?;
        let satisfied = opts.required.iter().all(|l| records.iter().take(k).any(|r| r.label() == *l));
        if satisfied || solve_k == dim {
            records.truncate(k);
            if let Some(missing) = opts.required.iter().find(|l| !records.iter().any(|r| r.label() == **l)) {
                return Err(SpectralError::MissingState { label: *missing, eps, available: records.len() });
            }
            return Ok(records);
        }
        k = (k + 4).min(dim);
    }
}

fn solve<A: SymmetricOperator + ?Sized>(
    h: &A,
    k: usize,
    opts: &SpectrumOptions,
    guesses: &[Vec<f64>],
) -> Result<EigenPairs, LinalgError> {
    let dim = h.dim();
    let warm = !guesses.is_empty() && dim > opts.warm_dense_limit;
    if dim <= opts.dense_limit && !warm {
        let eig = symmetric_eigen(&h.to_dense(), dim);
        // Never cut through a degenerate cluster: its S² content is only
        // well defined as a whole.
        let mut k = k;
        while k < dim && eig.values[k] - eig.values[k - 1] < CLUSTER_TOL * eig.values[k].abs().max(1.0) {
            k += 1;
        }
        return Ok(EigenPairs {
            values: eig.values[..k].to_vec(),
            vectors: eig.vectors.into_iter().take(k).collect(),
            residuals: vec![0.0; k],
            matvecs: 0,
        });
    }
    let mut it = IterativeOptions::new(k, opts.tolerance * h.norm_bound().max(1.0));
    it.max_matvecs = opts.max_matvecs;
    it.seed = opts.seed;
    if guesses.is_empty() {
        lanczos_lowest(h, &it)
    } else {
        it.max_basis = (4 * k).max(k + 24);
        davidson_lowest(h, guesses, &it)
    }
}

/// Rounds `⟨S²⟩` to `2S`, or `None` if it is not within `1e−6` of `S(S+1)`.
fn twice_spin_of(s_squared: f64) -> Option<u32> {
    let s = (libm::sqrt(1.0 + 4.0 * s_squared.max(0.0)) - 1.0) / 2.0;
    let twice = libm::round(2.0 * s);
    let exact = twice / 2.0 * (twice / 2.0 + 1.0);
    ((s_squared - exact).abs() < 1e-6).then_some(twice as u32)
}

fn project(op: &dyn Fn(&[f64], &mut [f64]), vectors: &[Vec<f64>]) -> Vec<f64> {
    let m = vectors.len();
    let n = vectors.first().map_or(0, Vec::len);
    let images: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mut w = vec![0.0; n];
            op(v, &mut w);
            w
        })
        .collect();
    let mut g = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let x = 0.5 * (dot(&vectors[i], &images[j]) + dot(&vectors[j], &images[i]));
            g[i * m + j] = x;
            g[j * m + i] = x;
        }
    }
    g
}

fn combine(vectors: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let n = vectors[0].len();
    let mut out = vec![0.0; n];
    for (v, &c) in vectors.iter().zip(coeffs) {
        if c != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
    }
    out
}

fn label_pairs<A: SymmetricOperator + ?Sized>(
    h: &A,
    s2: &SparseHermitianOperator,
    sector: &BasisSector,
    pairs: EigenPairs,
) -> Result<Vec<EigenstateRecord>, SpectralError> {
    let m = pairs.vectors.len();
    // Rotate into S² eigenvectors.
    let gs = project(&|x, y| s2.apply(x, y), &pairs.vectors);
    let es = symmetric_eigen(&gs, m);
    let spin_vectors: Vec<Vec<f64>> = es.vectors.iter().map(|c| combine(&pairs.vectors, c)).collect();

    // Group by rounded spin and diagonalise H inside each group.
    let mut states: Vec<(f64, Vec<f64>, f64)> = Vec::with_capacity(m);
    let mut i = 0;
    while i < m {
        let twice = libm::round(libm::sqrt(1.0 + 4.0 * es.values[i].max(0.0)) - 1.0);
        let mut j = i + 1;
        while j < m && libm::round(libm::sqrt(1.0 + 4.0 * es.values[j].max(0.0)) - 1.0) == twice {
            j += 1;
        }
        let block = &spin_vectors[i..j];
        let gh = project(&|x, y| h.apply(x, y), block);
        let eh = symmetric_eigen(&gh, j - i);
        for (energy, c) in eh.values.iter().zip(&eh.vectors) {
            let mut v = combine(block, c);
            let nv = libm::sqrt(dot(&v, &v));
            for x in v.iter_mut() {
                *x /= nv;
            }
            // Deterministic sign: largest-magnitude component positive.
            let lead = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            if lead < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            let s_sq = s2.expectation(&v);
            states.push((*energy, v, s_sq));
        }
        i = j;
    }
    states.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut counts: Vec<usize> = Vec::new();
    let mut records = Vec::with_capacity(m);
    let reliable = m.saturating_sub(if m == sector.dim() { 0 } else { GUARD_PAIRS });
    for (idx, (energy, vector, s_squared)) in states.into_iter().enumerate() {
        let twice = match twice_spin_of(s_squared) {
            Some(t) => t,
            // States beyond the reliable window may belong to a multiplet
            // that is only partly inside the computed subspace.
            None if idx >= reliable => u32::MAX,
            None => return Err(SpectralError::SpinLabel { energy, s_squared }),
        };
        let slot = twice as usize;
        let rank = if twice == u32::MAX {
            0
        } else {
            if counts.len() <= slot {
                counts.resize(slot + 1, 0);
            }
            counts[slot] += 1;
            counts[slot]
        };
        let mut r = vec![0.0; vector.len()];
        h.apply(&vector, &mut r);
        for (ri, vi) in r.iter_mut().zip(&vector) {
            *ri -= energy * vi;
        }
        let residual = libm::sqrt(dot(&r, &r));
        records.push(EigenstateRecord {
            energy,
            charge_profile: charge_profile(&vector, sector),
            vector,
            s_squared,
            twice_spin: twice,
            spin_rank: rank,
            residual,
        });
    }
    Ok(records)
}

/// Model data shared by repeated solves at different tilts.
#[derive(Debug, Clone)]
pub struct SpectrumSolver {
    geometry: Geometry,
    params: ModelParams,
    sector: BasisSector,
    hamiltonian: Hamiltonian,
    spin_squared: SparseHermitianOperator,
    options: SpectrumOptions,
}

/// Tilt sweep: records per grid point, plus continuity links.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub eps: Vec<f64>,
    pub points: Vec<Vec<EigenstateRecord>>,
    /// `links[j][i]`: index at grid point `j + 1` continuing record `i` of
    /// point `j`, chosen by maximal overlap among states of the same spin,
    /// with that overlap.
    pub links: Vec<Vec<Option<(usize, f64)>>>,
}

impl SweepTable {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// Record with `label` at grid point `j`.
    pub fn find(&self, j: usize, label: StateLabel) -> Option<&EigenstateRecord> {
        self.points[j].iter().find(|r| r.label() == label)
    }

    /// `E_b − E_a` at every grid point where both states are present.
    pub fn gap_series(&self, a: StateLabel, b: StateLabel) -> Vec<(usize, f64)> {
        (0..self.len())
            .filter_map(|j| Some((j, self.find(j, b)?.energy - self.find(j, a)?.energy)))
            .collect()
    }
}

/// A local minimum of a same-spin gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntiCrossing {
    pub eps: f64,
    pub gap: f64,
    /// Bracket searched, in units of `t`.
    pub bracket: (f64, f64),
}

/// Global minimum of a same-spin gap over a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapMinimum {
    /// Smallest gap among the grid samples, and where it occurs.
    pub grid_eps: f64,
    pub grid_gap: f64,
    /// Smallest gap after refinement between grid points.
    pub eps: f64,
    pub gap: f64,
}

/// Subgrid points scanned inside a bracket before golden-section search.
const SUBGRID: usize = 16;
/// Golden-section stopping width in `ε`.
const GOLDEN_TOL: f64 = 1e-3;

impl SpectrumSolver {
    /// Works in the half-filled `S^z = 0` sector of `geometry`.
    pub fn new(geometry: Geometry, params: ModelParams, options: SpectrumOptions) -> Result<Self, SpectralError> {
        let sector = geometry.half_filled_sector()?;
        Self::with_sector(geometry, params, sector, options)
    }

    pub fn with_sector(
        geometry: Geometry,
        params: ModelParams,
        sector: BasisSector,
        options: SpectrumOptions,
    ) -> Result<Self, SpectralError> {
        let hamiltonian = Hamiltonian::new(&geometry, &params, &sector)?;
        let spin_squared = crate::model::build_spin_squared(&sector);
        Ok(SpectrumSolver { geometry, params, sector, hamiltonian, spin_squared, options })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn sector(&self) -> &BasisSector {
        &self.sector
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn spin_squared(&self) -> &SparseHermitianOperator {
        &self.spin_squared
    }

    pub fn options(&self) -> &SpectrumOptions {
        &self.options
    }

    /// Labelled low spectrum at tilt `eps`.
    pub fn solve(&self, eps: f64) -> Result<Vec<EigenstateRecord>, SpectralError> {
        self.solve_warm(eps, &[])
    }

    /// As [`solve`](Self::solve), seeding iterative solvers with `guesses`.
    pub fn solve_warm(&self, eps: f64, guesses: &[Vec<f64>]) -> Result<Vec<EigenstateRecord>, SpectralError> {
        low_spectrum_from(&self.hamiltonian.at(eps), &self.spin_squared, &self.sector, &self.options, guesses, eps)
    }

    /// As [`solve_warm`](Self::solve_warm), growing the spectrum until every
    /// label in `required` is present.
    pub fn solve_requiring(
        &self,
        eps: f64,
        guesses: &[Vec<f64>],
        required: &[StateLabel],
    ) -> Result<Vec<EigenstateRecord>, SpectralError> {
        let mut opts = self.options.clone();
        for &l in required {
            if !opts.required.contains(&l) {
                opts.required.push(l);
            }
        }
        low_spectrum_from(&self.hamiltonian.at(eps), &self.spin_squared, &self.sector, &opts, guesses, eps)
    }

    /// Solves every grid point in order, warm-starting from the previous one.
    ///
    /// With `keep_vectors = false` eigenvectors are dropped once links are
    /// assigned, except at the first and last point.
    pub fn sweep_points(&self, grid: &[f64], keep_vectors: bool) -> Result<SweepTable, SpectralError> {
        check_grid(grid)?;
        let mut points: Vec<Vec<EigenstateRecord>> = Vec::with_capacity(grid.len());
        let mut links = Vec::with_capacity(grid.len().saturating_sub(1));
        let mut k = self.options.k;
        for (j, &eps) in grid.iter().enumerate() {
            let guesses: Vec<Vec<f64>> =
                points.last().map(|p| p.iter().map(|r| r.vector.clone()).collect()).unwrap_or_default();
            let mut opts_k = self.options.clone();
            opts_k.k = k;
            let records = low_spectrum_from(
                &self.hamiltonian.at(eps),
                &self.spin_squared,
                &self.sector,
                &opts_k,
                &guesses,
                eps,
            )?;
            k = k.max(records.len());
            if let Some(prev) = points.last_mut() {
                links.push(link_points(prev, &records));
                if !keep_vectors && j >= 2 {
                    prev.iter_mut().for_each(|r| r.vector = Vec::new());
                }
            }
            points.push(records);
        }
        let mut table = SweepTable { eps: grid.to_vec(), points, links };
        self.equalise_counts(&mut table, keep_vectors)?;
        Ok(table)
    }

    /// Re-solves points that returned fewer states than the largest count, so
    /// every grid point carries the same number of records.
    fn equalise_counts(&self, table: &mut SweepTable, keep_vectors: bool) -> Result<(), SpectralError> {
        let k = table.points.iter().map(Vec::len).max().unwrap_or(0);
        let mut changed = false;
        for j in 0..table.len() {
            if table.points[j].len() < k {
                let mut opts = self.options.clone();
                opts.k = k;
                let guesses: Vec<Vec<f64>> = table.points[j].iter().map(|r| r.vector.clone()).filter(|v| !v.is_empty()).collect();
                let eps = table.eps[j];
                table.points[j] = low_spectrum_from(
                    &self.hamiltonian.at(eps),
                    &self.spin_squared,
                    &self.sector,
                    &opts,
                    &guesses,
                    eps,
                )?;
                table.points[j].truncate(k);
                changed = true;
            }
        }
        if changed {
            // Links touching re-solved points need vectors on both sides.
            for j in 0..table.links.len() {
                let (a, b) = (&table.points[j], &table.points[j + 1]);
                if a.iter().all(|r| !r.vector.is_empty()) && b.iter().all(|r| !r.vector.is_empty()) {
                    table.links[j] = link_points(a, b);
                } else {
                    table.links[j].resize(a.len(), None);
                }
            }
        }
        if !keep_vectors {
            let last = table.len().saturating_sub(1);
            for j in 1..last {
                table.points[j].iter_mut().for_each(|r| r.vector = Vec::new());
            }
        }
        Ok(())
    }

    /// Gap `E_b − E_a` at a single tilt.
    pub fn gap_at(&self, eps: f64, a: StateLabel, b: StateLabel, guesses: &[Vec<f64>]) -> Result<(f64, Vec<EigenstateRecord>), SpectralError> {
        let records = self.solve_requiring(eps, guesses, &[a, b])?;
        let find = |l: StateLabel| {
            records.iter().find(|r| r.label() == l).map(|r| r.energy).ok_or(SpectralError::MissingState {
                label: l,
                eps,
                available: records.len(),
            })
        };
        let gap = find(b)? - find(a)?;
        Ok((gap, records))
    }

    /// Minimises the `a`–`b` gap on `[lo, hi]`: a uniform subgrid scan, then
    /// golden-section search around the best subgrid point.
    pub fn refine_gap(&self, lo: f64, hi: f64, a: StateLabel, b: StateLabel) -> Result<AntiCrossing, SpectralError> {
        let mut guesses: Vec<Vec<f64>> = Vec::new();
        let gap_at = |eps: f64, guesses: &mut Vec<Vec<f64>>| -> Result<f64, SpectralError> {
            let (gap, records) = self.gap_at(eps, a, b, guesses)?;
            *guesses = records.into_iter().map(|r| r.vector).collect();
            Ok(gap)
        };
        let step = (hi - lo) / SUBGRID as f64;
        let mut best = (lo, f64::INFINITY);
        let mut samples = Vec::with_capacity(SUBGRID + 1);
        for s in 0..=SUBGRID {
            let eps = if s == SUBGRID { hi } else { lo + step * s as f64 };
            let g = gap_at(eps, &mut guesses)?;
            samples.push(g);
            if g < best.1 {
                best = (eps, g);
            }
        }
        let mut left = (best.0 - step).max(lo);
        let mut right = (best.0 + step).min(hi);
        let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
        let mut x1 = right - phi * (right - left);
        let mut x2 = left + phi * (right - left);
        let mut f1 = gap_at(x1, &mut guesses)?;
        let mut f2 = gap_at(x2, &mut guesses)?;
        while right - left > GOLDEN_TOL {
            if f1 <= f2 {
                right = x2;
                x2 = x1;
                f2 = f1;
                x1 = right - phi * (right - left);
                f1 = gap_at(x1, &mut guesses)?;
            } else {
                left = x1;
                x1 = x2;
                f1 = f2;
                x2 = left + phi * (right - left);
                f2 = gap_at(x2, &mut guesses)?;
            }
        }
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f < best.1 {
                best = (x, f);
            }
        }
        Ok(AntiCrossing { eps: best.0, gap: best.1, bracket: (lo, hi) })
    }

    /// Anti-crossings between states `a` and `b` (same spin, `a` below `b`).
    ///
    /// Candidates are interior local minima of the sampled gap and grid
    /// intervals across which the lower state's character jumps to the upper
    /// one (overlap links swap or fall below `1/√2`); each candidate bracket is
    /// refined by [`refine_gap`](Self::refine_gap).
    pub fn detect_anticrossings_between(
        &self,
        table: &SweepTable,
        a: StateLabel,
        b: StateLabel,
    ) -> Result<Vec<AntiCrossing>, SpectralError> {
        let series = table.gap_series(a, b);
        let mut brackets: Vec<(usize, usize)> = Vec::new();
        for w in series.windows(3) {
            let ((j0, g0), (_, g1), (j2, g2)) = (w[0], w[1], w[2]);
            if g1 < g0 && g1 < g2 {
                brackets.push((j0, j2));
            }
        }
        for j in 0..table.links.len() {
            if let Some(i) = table.points[j].iter().position(|r| r.label() == a) {
                let target_index = table.points[j + 1].iter().position(|r| r.label() == a);
                let swapped = match table.links[j].get(i).copied().flatten() {
                    Some((to, overlap)) => Some(to) != target_index || overlap < core::f64::consts::FRAC_1_SQRT_2,
                    None => false,
                };
                if swapped {
                    brackets.push((j, j + 1));
                }
            }
        }
        brackets.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (lo, hi) in brackets {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        let (start, end) = (table.eps[0], table.eps[table.len() - 1]);
        let mut out = Vec::with_capacity(merged.len());
        for (lo, hi) in merged {
            let ac = self.refine_gap(table.eps[lo], table.eps[hi], a, b)?;
            // Minima pinned to the ends of the sweep are not anti-crossings.
            if ac.eps > start + GOLDEN_TOL && ac.eps < end - GOLDEN_TOL {
                out.push(ac);
            }
        }
        Ok(out)
    }

    /// Minimum of the `a`–`b` gap over the sweep range: the sampled minimum,
    /// and the refined minimum over the sampled one's neighbourhood and every
    /// detected anti-crossing.
    pub fn min_gap_between(&self, table: &SweepTable, a: StateLabel, b: StateLabel) -> Result<GapMinimum, SpectralError> {
        let series = table.gap_series(a, b);
        let &(jmin, gmin) = series
            .iter()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .ok_or(SpectralError::NotEnoughStates(b))?;
        let lo = jmin.saturating_sub(1);
        let hi = (jmin + 1).min(table.len() - 1);
        let mut best = if lo == hi {
            AntiCrossing { eps: table.eps[jmin], gap: gmin, bracket: (table.eps[lo], table.eps[hi]) }
        } else {
            self.refine_gap(table.eps[lo], table.eps[hi], a, b)?
        };
        for ac in self.detect_anticrossings_between(table, a, b)? {
            if ac.gap < best.gap {
                best = ac;
            }
        }
        let (eps, gap) = if best.gap < gmin { (best.eps, best.gap) } else { (table.eps[jmin], gmin) };
        Ok(GapMinimum { grid_eps: table.eps[jmin], grid_gap: gmin, eps, gap })
    }
}

fn check_grid(grid: &[f64]) -> Result<(), SpectralError> {
    if grid.is_empty() {
        return Err(SpectralError::EmptyGrid);
    }
    if let Some(index) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SpectralError::GridNotAscending { index: index + 1 });
    }
    Ok(())
}

/// Continuity links between consecutive grid points: each state follows the
/// same-spin state of maximal overlap.
pub fn link_points(from: &[EigenstateRecord], to: &[EigenstateRecord]) -> Vec<Option<(usize, f64)>> {
    from.iter()
        .map(|r| {
            to.iter()
                .enumerate()
                .filter(|(_, s)| s.twice_spin == r.twice_spin && !s.vector.is_empty() && !r.vector.is_empty())
                .map(|(i, s)| (i, dot(&r.vector, &s.vector).abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
        })
        .collect()
}

/// Sweeps `geometry` over `grid`, keeping eigenvectors.
pub fn sweep_spectrum(
    geometry: &Geometry,
    params: &ModelParams,
    grid: &[f64],
    options: &SpectrumOptions,
) -> Result<SweepTable, SpectralError> {
    SpectrumSolver::new(geometry.clone(), *params, options.clone())?.sweep_points(grid, true)
}

/// Anti-crossings between the two lowest states of spin `twice_spin / 2`.
pub fn detect_anticrossings(
    solver: &SpectrumSolver,
    table: &SweepTable,
    twice_spin: u32,
) -> Result<Vec<AntiCrossing>, SpectralError> {
    solver.detect_anticrossings_between(table, StateLabel::new(twice_spin, 1), StateLabel::new(twice_spin, 2))
}

/// Minimum gap between the two lowest states of spin `twice_spin / 2`.
pub fn min_gap(solver: &SpectrumSolver, table: &SweepTable, twice_spin: u32) -> Result<GapMinimum, SpectralError> {
    solver.min_gap_between(table, StateLabel::new(twice_spin, 1), StateLabel::new(twice_spin, 2))
}
