//! Occupation-number basis for spin-1/2 fermions on a finite lattice.
//!
//! Modes are ordered canonically: every spin-up mode by ascending site, then
//! every spin-down mode by ascending site. A basis state is
//! `Π_m (c†_m)^{n_m} |0⟩` with the product taken in that order, so fermionic
//! signs are parities of occupied modes between the modes an operator touches.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Largest lattice supported: site occupations are stored as `u32` masks.
pub const MAX_SITES: usize = 32;

/// Sectors larger than this are refused before any allocation happens.
pub const MAX_SECTOR_DIM: usize = 1 << 25;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FockError {
    #[error("{sites} sites exceeds the supported maximum of {MAX_SITES}")]
    TooManySites { sites: usize },
    #[error("{count} spin-{spin} electrons do not fit on {sites} sites")]
    TooManyElectrons { spin: Spin, count: usize, sites: usize },
    #[error("sector of dimension {dim} exceeds the limit of {MAX_SECTOR_DIM}")]
    SectorTooLarge { dim: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Up => "up",
            Spin::Down => "down",
        })
    }
}

/// Bit-encoded occupations: bit `k` of `up` (`down`) is set when site `k`
/// holds a spin-up (spin-down) electron.
///
/// The derived ordering is lexicographic on `(up, down)` as unsigned
/// integers, which is the basis order used by [`BasisSector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FockState {
    up: u32,
    down: u32,
}

impl FockState {
    pub const fn new(up: u32, down: u32) -> Self {
        FockState { up, down }
    }

    /// Builds a state from explicit site lists (0-based).
    pub fn from_sites(up_sites: &[usize], down_sites: &[usize]) -> Self {
        let mask = |sites: &[usize]| sites.iter().fold(0u32, |m, &s| m | (1 << s));
        FockState::new(mask(up_sites), mask(down_sites))
    }

    pub const fn up_bits(self) -> u32 {
        self.up
    }

    pub const fn down_bits(self) -> u32 {
        self.down
    }

    pub const fn bits(self, spin: Spin) -> u32 {
        match spin {
            Spin::Up => self.up,
            Spin::Down => self.down,
        }
    }

    fn with_bits(self, spin: Spin, bits: u32) -> Self {
        match spin {
            Spin::Up => FockState::new(bits, self.down),
            Spin::Down => FockState::new(self.up, bits),
        }
    }

    pub const fn n_up(self) -> u32 {
        self.up.count_ones()
    }

    pub const fn n_down(self) -> u32 {
        self.down.count_ones()
    }

    pub const fn is_occupied(self, site: usize, spin: Spin) -> bool {
        self.bits(spin) >> site & 1 == 1
    }

    /// Electron count on `site`, in `{0, 1, 2}`.
    pub const fn occupancy(self, site: usize) -> u8 {
        ((self.up >> site & 1) + (self.down >> site & 1)) as u8
    }

    /// `S^z` on `site` in units of ħ, times two (so it is an integer).
    pub const fn twice_sz(self, site: usize) -> i32 {
        (self.up >> site & 1) as i32 - (self.down >> site & 1) as i32
    }

    /// Per-site occupations `(n_1, …, n_sites)`.
    pub fn occupations(self, sites: usize) -> Vec<u8> {
        (0..sites).map(|k| self.occupancy(k)).collect()
    }
}

/// Electron count on `site`.
pub fn occupancy(state: FockState, site: usize) -> u8 {
    state.occupancy(site)
}

/// Image of `c†_{to,σ} c_{from,σ} |state⟩`, or `None` when the term
/// annihilates the state.
///
/// Both modes belong to the same spin block of the canonical ordering, so the
/// sign is the parity of same-spin electrons strictly between the two sites.
pub fn apply_hop(state: FockState, from: usize, to: usize, spin: Spin) -> Option<(FockState, i8)> {
    debug_assert!(from != to, "hop needs distinct sites");
    let bits = state.bits(spin);
    if bits >> from & 1 == 0 || bits >> to & 1 == 1 {
        return None;
    }
    let (lo, hi) = if from < to { (from, to) } else { (to, from) };
    let between = bits & (mask_below(hi) & !mask_below(lo + 1));
    let sign = if between.count_ones() % 2 == 0 { 1 } else { -1 };
    Some((state.with_bits(spin, bits ^ (1 << from) ^ (1 << to)), sign))
}

/// Applies a single creation (`create = true`) or annihilation operator on
/// mode `(site, spin)`, returning the fermionic sign.
pub(crate) fn apply_ladder(
    state: FockState,
    sites: usize,
    site: usize,
    spin: Spin,
    create: bool,
) -> Option<(FockState, i8)> {
    let occupied = state.is_occupied(site, spin);
    if occupied == create {
        return None;
    }
    // Occupied modes preceding (site, spin) in the flattened order.
    let before = match spin {
        Spin::Up => (state.up & mask_below(site)).count_ones(),
        Spin::Down => {
            debug_assert!(site < sites);
            state.up.count_ones() + (state.down & mask_below(site)).count_ones()
        }
    };
    let sign = if before % 2 == 0 { 1 } else { -1 };
    let bits = state.bits(spin) ^ (1 << site);
    Some((state.with_bits(spin, bits), sign))
}

#[inline]
fn mask_below(bit: usize) -> u32 {
    if bit >= 32 {
        u32::MAX
    } else {
        (1u32 << bit) - 1
    }
}

/// All `sites`-bit masks with `count` bits set, ascending.
fn masks_with_popcount(sites: usize, count: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(binomial(sites, count) as usize);
    if count == 0 {
        out.push(0);
        return out;
    }
    let limit: u64 = 1u64 << sites;
    let mut m: u64 = (1u64 << count) - 1;
    while m < limit {
        out.push(m as u32);
        // Gosper's hack: next integer with the same popcount.
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Every Fock state with fixed `(n_up, n_down)` on `sites` sites, in
/// ascending `(up_bits, down_bits)` order.
#[derive(Clone, PartialEq, Eq)]
pub struct BasisSector {
    sites: usize,
    n_up: usize,
    n_down: usize,
    ups: Vec<u32>,
    downs: Vec<u32>,
    states: Vec<FockState>,
}

impl fmt::Debug for BasisSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSector")
            .field("sites", &self.sites)
            .field("n_up", &self.n_up)
            .field("n_down", &self.n_down)
            .field("dim", &self.states.len())
            .finish()
    }
}

/// Enumerates the `(n_up, n_down)` sector on `sites` sites.
pub fn enumerate_sector(sites: usize, n_up: usize, n_down: usize) -> Result<BasisSector, FockError> {
    if sites > MAX_SITES {
        return Err(FockError::TooManySites { sites });
    }
    for (spin, count) in [(Spin::Up, n_up), (Spin::Down, n_down)] {
        if count > sites {
            return Err(FockError::TooManyElectrons { spin, count, sites });
        }
    }
    let dim = binomial(sites, n_up) * binomial(sites, n_down);
    if dim > MAX_SECTOR_DIM as u128 {
        return Err(FockError::SectorTooLarge { dim });
    }
    let ups = masks_with_popcount(sites, n_up);
    let downs = masks_with_popcount(sites, n_down);
    let states = ups
        .iter()
        .flat_map(|&u| downs.iter().map(move |&d| FockState::new(u, d)))
        .collect();
    Ok(BasisSector { sites, n_up, n_down, ups, downs, states })
}

impl BasisSector {
    /// Half filling with `S^z = 0`: `sites/2` electrons of each spin.
    pub fn half_filled(sites: usize) -> Result<BasisSector, FockError> {
        enumerate_sector(sites, sites / 2, sites - sites / 2)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> FockState {
        self.states[index]
    }

    /// Ordinal of `state`, or `None` if it lies outside the sector.
    pub fn index_of(&self, state: FockState) -> Option<usize> {
        let u = self.ups.binary_search(&state.up_bits()).ok()?;
        let d = self.downs.binary_search(&state.down_bits()).ok()?;
        Some(u * self.downs.len() + d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    extern crate std;
    use std::vec;

    #[test]
    fn two_site_sector_lists_four_states() {
        let s = enumerate_sector(2, 1, 1).unwrap();
        // ↑ on site 1 is bit 0.
        let expected = [
            FockState::from_sites(&[0], &[0]),
            FockState::from_sites(&[0], &[1]),
            FockState::from_sites(&[1], &[0]),
            FockState::from_sites(&[1], &[1]),
        ];
        assert_eq!(s.states(), &expected);
    }

    #[test]
    fn sector_sizes() {
        assert_eq!(enumerate_sector(4, 2, 2).unwrap().dim(), 36);
        assert_eq!(enumerate_sector(10, 5, 5).unwrap().dim(), 63504);
        assert_eq!(enumerate_sector(5, 0, 5).unwrap().dim(), 1);
        assert_eq!(enumerate_sector(6, 3, 2).unwrap().dim(), 300);
    }

    #[test]
    fn rejects_oversized_requests() {
        assert_eq!(enumerate_sector(33, 1, 1), Err(FockError::TooManySites { sites: 33 }));
        assert!(matches!(
            enumerate_sector(3, 4, 1),
            Err(FockError::TooManyElectrons { spin: Spin::Up, .. })
        ));
        assert!(matches!(enumerate_sector(32, 16, 16), Err(FockError::SectorTooLarge { .. })));
    }

    #[test]
    fn index_is_inverse_of_state() {
        let s = enumerate_sector(6, 3, 2).unwrap();
        for (i, &st) in s.states().iter().enumerate() {
            assert_eq!(s.index_of(st), Some(i));
        }
        assert_eq!(s.index_of(FockState::from_sites(&[0], &[1])), None);
        assert!(s.states().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn simple_hops() {
        let s = FockState::from_sites(&[0], &[]);
        assert_eq!(apply_hop(s, 0, 1, Spin::Up), Some((FockState::from_sites(&[1], &[]), 1)));
        let blocked = FockState::from_sites(&[0, 1], &[]);
        assert_eq!(apply_hop(blocked, 0, 1, Spin::Up), None);
        // Nothing to move.
        assert_eq!(apply_hop(s, 0, 1, Spin::Down), None);
        // One spin-up electron in between flips the sign; spin-down electrons
        // live in the other block and do not.
        let s = FockState::from_sites(&[0, 1], &[1]);
        assert_eq!(apply_hop(s, 0, 2, Spin::Up), Some((FockState::from_sites(&[1, 2], &[1]), -1)));
        let s = FockState::from_sites(&[1], &[0, 1]);
        assert_eq!(apply_hop(s, 0, 2, Spin::Down).unwrap().1, -1);
        assert_eq!(apply_hop(FockState::from_sites(&[0], &[1]), 0, 2, Spin::Up).unwrap().1, 1);
    }

    #[test]
    fn occupancy_counts() {
        let s = FockState::from_sites(&[0], &[0]);
        assert_eq!(occupancy(s, 0), 2);
        let s = FockState::from_sites(&[0], &[1]);
        assert_eq!(occupancy(s, 2), 0);
        assert_eq!(s.occupations(3), vec![1, 1, 0]);
    }

    /// First-quantised oracle: a k-particle antisymmetric tensor over the
    /// 2·sites single-particle modes, with one-body hopping applied to every
    /// particle slot. The sign of `c†_b c_a` on a canonical basis state is
    /// read off the sorted component of the resulting tensor.
    fn antisymmetrised_hop_sign(modes_occupied: &[usize], a: usize, b: usize, n_modes: usize) -> Option<i32> {
        let k = modes_occupied.len();
        let size = n_modes.pow(k as u32);
        let index = |slots: &[usize]| slots.iter().fold(0, |acc, &m| acc * n_modes + m);
        let mut psi = vec![0i32; size];
        for perm in permutations(k) {
            let slots: std::vec::Vec<usize> = perm.iter().map(|&p| modes_occupied[p]).collect();
            psi[index(&slots)] += permutation_sign(&perm);
        }
        let mut out = vec![0i32; size];
        for (flat, &amp) in psi.iter().enumerate() {
            if amp == 0 {
                continue;
            }
            let mut slots = vec![0; k];
            let mut rest = flat;
            for s in (0..k).rev() {
                slots[s] = rest % n_modes;
                rest /= n_modes;
            }
            for s in 0..k {
                if slots[s] == a {
                    let mut moved = slots.clone();
                    moved[s] = b;
                    out[index(&moved)] += amp;
                }
            }
        }
        let mut target: std::vec::Vec<usize> =
            modes_occupied.iter().map(|&m| if m == a { b } else { m }).collect();
        if !modes_occupied.contains(&a) || (modes_occupied.contains(&b) && a != b) {
            assert!(out.iter().all(|&x| x == 0));
            return None;
        }
        target.sort_unstable();
        Some(out[index(&target)])
    }

    fn permutations(k: usize) -> std::vec::Vec<std::vec::Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut all = vec![];
        for p in permutations(k - 1) {
            for pos in 0..k {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                all.push(q);
            }
        }
        all
    }

    fn permutation_sign(p: &[usize]) -> i32 {
        let mut inv = 0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                if p[i] > p[j] {
                    inv += 1;
                }
            }
        }
        if inv % 2 == 0 { 1 } else { -1 }
    }

    #[test]
    fn hop_signs_match_antisymmetrised_wavefunctions() {
        let sites = 3;
        for (n_up, n_down) in [(2, 0), (1, 1), (0, 2), (2, 1), (2, 2)] {
            let sector = enumerate_sector(sites, n_up, n_down).unwrap();
            for &st in sector.states() {
                let modes: std::vec::Vec<usize> = (0..sites)
                    .filter(|&k| st.is_occupied(k, Spin::Up))
                    .chain((0..sites).filter(|&k| st.is_occupied(k, Spin::Down)).map(|k| k + sites))
                    .collect();
                for spin in Spin::BOTH {
                    let offset = if spin == Spin::Up { 0 } else { sites };
                    for from in 0..sites {
                        for to in 0..sites {
                            if from == to {
                                continue;
                            }
                            let oracle = antisymmetrised_hop_sign(&modes, from + offset, to + offset, 2 * sites);
                            let got = apply_hop(st, from, to, spin).map(|(_, s)| s as i32);
                            assert_eq!(got, oracle, "state {st:?} hop {from}->{to} {spin}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ladder_operators_compose_to_hops() {
        let sites = 4;
        let sector = enumerate_sector(sites, 2, 2).unwrap();
        for &st in sector.states() {
            for spin in Spin::BOTH {
                for from in 0..sites {
                    for to in 0..sites {
                        if from == to {
                            continue;
                        }
                        let composed = apply_ladder(st, sites, from, spin, false).and_then(|(s1, a)| {
                            apply_ladder(s1, sites, to, spin, true).map(|(s2, b)| (s2, a * b))
                        });
                        assert_eq!(composed, apply_hop(st, from, to, spin));
                    }
                }
            }
        }
    }
}
