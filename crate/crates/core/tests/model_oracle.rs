mod common;

use common::{commutator, dense, max_abs, FockSpace};
use nalgebra::DMatrix;
use tiltcert_core::fock::{enumerate_sector, BasisSector};
use tiltcert_core::linalg::{symmetric_eigen, SymmetricOperator};
use tiltcert_core::model::{build_charge_projectors, build_spin_squared, Geometry, Hamiltonian, ModelParams};
use tiltcert_core::spectral::{SpectrumOptions, SpectrumSolver, StateLabel};

fn geometries() -> Vec<Geometry> {
    vec![Geometry::chain(2).unwrap(), Geometry::chain(4).unwrap(), Geometry::ladder(2).unwrap()]
}

fn all_sectors(sites: usize) -> Vec<BasisSector> {
    (0..=sites).flat_map(|u| (0..=sites).map(move |d| enumerate_sector(sites, u, d).unwrap())).collect()
}

#[test]
fn hamiltonian_matches_jordan_wigner_in_every_sector() {
    let params = [ModelParams::default(), ModelParams::new(0.7, 3.0, 1.3), ModelParams { hop_sign: -1.0, ..ModelParams::new(1.0, 8.0, 0.0) }];
    for g in geometries() {
        let space = FockSpace::new(g.sites());
        for p in &params {
            for eps in [0.0, 2.5, 13.4] {
                let full = space.hamiltonian(&g, p, eps);
                for sector in all_sectors(g.sites()) {
                    let h = Hamiltonian::new(&g, p, &sector).unwrap().matrix(eps);
                    let ours = dense(&h.to_dense(), sector.dim());
                    let oracle = space.restrict(&full, &sector);
                    assert!(max_abs(&(ours - oracle)) < 1e-12, "{g} {p:?} eps {eps}");
                }
            }
        }
    }
}

#[test]
fn spin_squared_matches_jordan_wigner() {
    for sites in [2, 4] {
        let space = FockSpace::new(sites);
        let full = space.spin_squared();
        for sector in all_sectors(sites) {
            let ours = dense(&build_spin_squared(&sector).to_dense(), sector.dim());
            assert!(max_abs(&(ours - space.restrict(&full, &sector))) < 1e-12);
        }
    }
}

#[test]
fn sectors_are_invariant_subspaces() {
    // The oracle never couples a sector to its complement.
    let g = Geometry::chain(4).unwrap();
    let space = FockSpace::new(4);
    let full = space.hamiltonian(&g, &ModelParams::default(), 7.0);
    let sector = BasisSector::half_filled(4).unwrap();
    let inside = space.embedding(&sector);
    for &i in &inside {
        for j in 0..space.dim() {
            if !inside.contains(&j) {
                assert_eq!(full[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn hamiltonian_conserves_number_and_spin() {
    for g in geometries() {
        let space = FockSpace::new(g.sites());
        let h = space.hamiltonian(&g, &ModelParams::default(), 9.0);
        for q in [space.number(), space.spin_z(), space.spin_squared()] {
            assert!(max_abs(&commutator(&h, &q)) < 1e-10, "{g}");
        }
        // The same holds for the sector operators themselves.
        let sector = g.half_filled_sector().unwrap();
        let hs = dense(&Hamiltonian::new(&g, &ModelParams::default(), &sector).unwrap().matrix(9.0).to_dense(), sector.dim());
        let s2 = dense(&build_spin_squared(&sector).to_dense(), sector.dim());
        assert!(max_abs(&commutator(&hs, &s2)) < 1e-10);
    }
}

#[test]
fn charge_projectors_resolve_identity() {
    for sites in [2, 4, 6] {
        let sector = BasisSector::half_filled(sites).unwrap();
        let projectors = build_charge_projectors(&sector);
        let mut counts = vec![0u32; sector.dim()];
        for p in &projectors {
            for &m in &p.members {
                counts[m] += 1;
                assert_eq!(sector.state(m).occupations(sites), p.config.0);
            }
        }
        assert!(counts.iter().all(|&c| c == 1));
    }
    // Against the oracle: Σ_n L_n is the identity and every L_n commutes
    // with each site charge.
    let space = FockSpace::new(4);
    let sector = BasisSector::half_filled(4).unwrap();
    let n1 = space.restrict(&space.site_charge(1), &sector);
    let mut sum = DMatrix::zeros(sector.dim(), sector.dim());
    for p in build_charge_projectors(&sector) {
        let mut l = DMatrix::zeros(sector.dim(), sector.dim());
        for &m in &p.members {
            l[(m, m)] = 1.0;
        }
        assert_eq!(max_abs(&commutator(&l, &n1)), 0.0);
        sum += l;
    }
    assert_eq!(sum, DMatrix::identity(sector.dim(), sector.dim()));
}

#[test]
fn iterative_eigenpairs_match_dense_diagonalisation() {
    for (g, eps) in [(Geometry::chain(4).unwrap(), 13.4), (Geometry::chain(6).unwrap(), 35.0), (Geometry::ladder(2).unwrap(), 60.0)] {
        let solver = SpectrumSolver::new(g.clone(), ModelParams::default(), SpectrumOptions::with_k(6).requiring_lowest_pairs()).unwrap();
        let n = solver.sector().dim();
        let h = solver.hamiltonian().at(eps);
        let exact = symmetric_eigen(&h.to_dense(), n);
        let records = solver.solve(eps).unwrap();
        for r in &records {
            // Each record is an eigenpair of the dense matrix.
            assert!(exact.values.iter().any(|&e| (e - r.energy).abs() < 1e-8), "{g} {}", r.label());
            let mut hv = vec![0.0; n];
            h.apply(&r.vector, &mut hv);
            let res: f64 = hv.iter().zip(&r.vector).map(|(a, b)| (a - r.energy * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-8, "{g} residual {res}");
        }
        // The lowest records are the lowest dense eigenvalues.
        let mut energies: Vec<f64> = records.iter().map(|r| r.energy).collect();
        energies.sort_by(f64::total_cmp);
        for (a, b) in energies.iter().zip(&exact.values).take(4) {
            assert!((a - b).abs() < 1e-8, "{g}: {a} vs {b}");
        }
        let s1 = records.iter().find(|r| r.label() == StateLabel::singlet(1)).unwrap();
        assert!(s1.s_squared.abs() < 1e-8);
    }
}
