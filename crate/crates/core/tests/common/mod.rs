//! Independent dense reference built from Jordan–Wigner matrices over the
//! full Fock space of up to four sites.

#![allow(dead_code)]

use nalgebra::DMatrix;
use tiltcert_core::fock::BasisSector;
use tiltcert_core::model::{tilt_profile, Geometry, ModelParams};

/// Creation and annihilation matrices over the `4^sites` Fock space.
///
/// Mode `m` is site `m` spin up for `m < sites` and site `m − sites` spin
/// down otherwise; a full-space index has bit `m` set when mode `m` is
/// occupied.
pub struct FockSpace {
    pub sites: usize,
    pub annihilate: Vec<DMatrix<f64>>,
}

impl FockSpace {
    pub fn new(sites: usize) -> Self {
        let modes = 2 * sites;
        let dim = 1usize << modes;
        let annihilate = (0..modes)
            .map(|m| {
                let mut c = DMatrix::zeros(dim, dim);
                for x in 0..dim {
                    if x >> m & 1 == 1 {
                        // Jordan–Wigner string over the modes before `m`.
                        let parity = (x & ((1 << m) - 1)).count_ones();
                        c[(x ^ (1 << m), x)] = if parity % 2 == 0 { 1.0 } else { -1.0 };
                    }
                }
                c
            })
            .collect();
        FockSpace { sites, annihilate }
    }

    pub fn dim(&self) -> usize {
        1 << (2 * self.sites)
    }

    pub fn c(&self, site: usize, up: bool) -> &DMatrix<f64> {
        &self.annihilate[if up { site } else { self.sites + site }]
    }

    pub fn n(&self, site: usize, up: bool) -> DMatrix<f64> {
        let c = self.c(site, up);
        c.transpose() * c
    }

    pub fn site_charge(&self, site: usize) -> DMatrix<f64> {
        self.n(site, true) + self.n(site, false)
    }

    pub fn number(&self) -> DMatrix<f64> {
        (0..self.sites).fold(DMatrix::zeros(self.dim(), self.dim()), |acc, k| acc + self.site_charge(k))
    }

    pub fn hamiltonian(&self, geometry: &Geometry, params: &ModelParams, epsilon: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let mut h = DMatrix::zeros(dim, dim);
        let id = DMatrix::<f64>::identity(dim, dim);
        for &(k, l) in geometry.edges() {
            for up in [true, false] {
                let hop = self.c(k, up).transpose() * self.c(l, up);
                h += (&hop + hop.transpose()) * (params.hop_sign * params.t);
            }
            h += self.site_charge(k) * self.site_charge(l) * params.v;
        }
        let tilt = tilt_profile(geometry, epsilon);
        for k in 0..self.sites {
            let nk = self.site_charge(k);
            h += &nk * tilt.as_slice()[k];
            h += &nk * (&nk - &id) * (0.5 * params.u);
        }
        h
    }

    pub fn spin_z(&self) -> DMatrix<f64> {
        (0..self.sites).fold(DMatrix::zeros(self.dim(), self.dim()), |acc, k| {
            acc + (self.n(k, true) - self.n(k, false)) * 0.5
        })
    }

    /// `S² = S⁻S⁺ + S_z² + S_z`.
    pub fn spin_squared(&self) -> DMatrix<f64> {
        let raise =
            (0..self.sites).fold(DMatrix::zeros(self.dim(), self.dim()), |acc, k| acc + self.c(k, true).transpose() * self.c(k, false));
        let sz = self.spin_z();
        raise.transpose() * &raise + &sz * &sz + sz
    }

    /// Full-space index of every sector basis state, in sector order.
    pub fn embedding(&self, sector: &BasisSector) -> Vec<usize> {
        sector
            .states()
            .iter()
            .map(|s| s.up_bits() as usize | (s.down_bits() as usize) << self.sites)
            .collect()
    }

    /// Restriction of a full-space matrix to the sector.
    pub fn restrict(&self, a: &DMatrix<f64>, sector: &BasisSector) -> DMatrix<f64> {
        let idx = self.embedding(sector);
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
    }
}

pub fn dense(a: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, a)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}
