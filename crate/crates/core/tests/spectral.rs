use tiltcert_core::model::{tilt_profile, ChargeConfig, Geometry, ModelParams};
use tiltcert_core::spectral::{
    detect_anticrossings, min_gap, sweep_spectrum, EigenstateRecord, SpectralError, SpectrumOptions, SpectrumSolver,
    StateLabel,
};

fn solver(geometry: Geometry, params: ModelParams) -> SpectrumSolver {
    SpectrumSolver::new(geometry, params, SpectrumOptions::with_k(6).requiring_lowest_pairs()).unwrap()
}

fn find(records: &[EigenstateRecord], label: StateLabel) -> &EigenstateRecord {
    records.iter().find(|r| r.label() == label).unwrap_or_else(|| panic!("{label} missing"))
}

fn assert_profile(record: &EigenstateRecord, config: &str, tol: f64) {
    let c: ChargeConfig = config.parse().unwrap();
    for (x, &n) in record.charge_profile.iter().zip(c.as_slice()) {
        assert!((x - n as f64).abs() <= tol, "{}: {:?} vs {config}", record.label(), record.charge_profile);
    }
}

fn grid(step: f64, end: f64) -> Vec<f64> {
    (0..=(end / step).round() as usize).map(|i| i as f64 * step).collect()
}

#[test]
fn four_site_spectrum_at_zero_tilt() {
    let s = solver(Geometry::chain(4).unwrap(), ModelParams::default());
    let records = s.solve(0.0).unwrap();
    let e = |l| find(&records, l).energy;
    let (s1, s2, t1, t2) = (e(StateLabel::singlet(1)), e(StateLabel::singlet(2)), e(StateLabel::triplet(1)), e(StateLabel::triplet(2)));
    assert!(s1 < t1 && t1 < t2 && t2 < s2, "{s1} {t1} {t2} {s2}");
    for r in &records {
        // S(S+1) rounds cleanly to a multiplet.
        let s = r.total_spin();
        assert!((r.s_squared - s * (s + 1.0)).abs() < 1e-6);
        assert!((r.charge_profile.iter().sum::<f64>() - 4.0).abs() < 1e-10);
        assert!(r.charge_profile.iter().all(|&x| (-1e-12..=2.0 + 1e-12).contains(&x)));
        assert!((r.vector.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn classical_limit_matches_configuration_energies() {
    let g = Geometry::chain(4).unwrap();
    let params = ModelParams::new(0.0, 40.0, 10.0);
    let s = solver(g.clone(), params);
    let eps = 17.0;
    let tilt = tilt_profile(&g, eps);
    let mut classical: Vec<f64> = s
        .sector()
        .states()
        .iter()
        .map(|b| {
            let n: Vec<f64> = b.occupations(4).iter().map(|&x| x as f64).collect();
            let onsite: f64 = n.iter().map(|x| 20.0 * x * (x - 1.0)).sum();
            let bonds: f64 = g.edges().iter().map(|&(k, l)| 10.0 * n[k] * n[l]).sum();
            onsite + bonds + n.iter().zip(tilt.as_slice()).map(|(x, e)| x * e).sum::<f64>()
        })
        .collect();
    classical.sort_by(f64::total_cmp);
    let mut energies: Vec<f64> = s.solve(eps).unwrap().iter().map(|r| r.energy).collect();
    energies.sort_by(f64::total_cmp);
    for e in &energies {
        assert!(classical.iter().any(|c| (c - e).abs() < 1e-9), "{e} is not a configuration energy");
    }
    assert!((energies[0] - classical[0]).abs() < 1e-9);
}

#[test]
fn doubling_u_doubles_the_spectrum_without_hopping_or_coulomb() {
    let g = Geometry::chain(4).unwrap();
    let a = solver(g.clone(), ModelParams::new(0.0, 7.0, 0.0)).solve(0.0).unwrap();
    let b = solver(g, ModelParams::new(0.0, 14.0, 0.0)).solve(0.0).unwrap();
    let mut ea: Vec<f64> = a.iter().map(|r| r.energy).collect();
    let mut eb: Vec<f64> = b.iter().map(|r| r.energy).collect();
    ea.sort_by(f64::total_cmp);
    eb.sort_by(f64::total_cmp);
    for (x, y) in ea.iter().zip(&eb) {
        assert!((2.0 * x - y).abs() < 1e-9);
    }
}

#[test]
fn ground_energy_does_not_rise_with_hopping() {
    let g = Geometry::chain(4).unwrap();
    let mut last = f64::INFINITY;
    for t in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let e = find(&solver(g.clone(), ModelParams::new(t, 40.0, 10.0)).solve(0.0).unwrap(), StateLabel::singlet(1)).energy;
        assert!(e <= last + 1e-12, "t = {t}: {e} after {last}");
        last = e;
    }
}

#[test]
fn four_site_charge_configurations() {
    let s = solver(Geometry::chain(4).unwrap(), ModelParams::default());
    let at70 = s.solve(70.0).unwrap();
    assert_profile(find(&at70, StateLabel::singlet(1)), "2200", 0.05);
    assert_profile(find(&at70, StateLabel::triplet(1)), "2110", 0.05);
    let at35 = s.solve(35.0).unwrap();
    assert_profile(find(&at35, StateLabel::triplet(2)), "2101", 0.05);
    assert_profile(find(&at35, StateLabel::singlet(2)), "2200", 0.05);

    // S2 switches to (2,2,0,0) just above 30 and passes to (2,1,1,0) around 50.
    let table = sweep_spectrum(s.geometry(), s.params(), &grid(1.0, 70.0), s.options()).unwrap();
    let s2 = |eps: f64| table.find(table.eps.iter().position(|&e| e == eps).unwrap(), StateLabel::singlet(2)).unwrap();
    assert_profile(s2(29.0), "2101", 0.1);
    assert_profile(s2(32.0), "2200", 0.1);
    assert_profile(s2(55.0), "2110", 0.1);
    for points in &table.points {
        assert_eq!(points.len(), table.points[0].len());
        for spin in [0, 2] {
            let energies: Vec<f64> = points.iter().filter(|r| r.twice_spin == spin).map(|r| r.energy).collect();
            assert!(energies.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn six_site_ground_states_share_a_configuration_at_35() {
    let s = solver(Geometry::chain(6).unwrap(), ModelParams::default());
    let records = s.solve(35.0).unwrap();
    assert_profile(find(&records, StateLabel::singlet(1)), "221100", 0.05);
    assert_profile(find(&records, StateLabel::triplet(1)), "221100", 0.05);
}

#[test]
fn four_site_anticrossings_sit_near_13_4() {
    let s = solver(Geometry::chain(4).unwrap(), ModelParams::default());
    let table = s.sweep_points(&grid(0.1, 20.0), false).unwrap();
    for spin in [0, 2] {
        let found = detect_anticrossings(&s, &table, spin).unwrap();
        assert!(found.iter().any(|ac| (ac.eps - 13.4).abs() <= 0.2), "spin {spin}: {found:?}");
        let m = min_gap(&s, &table, spin).unwrap();
        assert!(m.gap > 0.0 && m.gap <= m.grid_gap);
    }
}

#[test]
fn uncoupled_levels_have_no_anticrossing() {
    // Two sites without hopping: the singlet levels (1,1) and (2,0) run
    // parallel apart from the tilt and never approach each other.
    let s = SpectrumSolver::new(Geometry::chain(2).unwrap(), ModelParams::new(0.0, 40.0, 10.0), SpectrumOptions::with_k(4)).unwrap();
    let table = s.sweep_points(&grid(0.5, 5.0), false).unwrap();
    assert!(detect_anticrossings(&s, &table, 0).unwrap().is_empty());
}

#[test]
fn single_point_sweep_equals_a_solve() {
    let s = solver(Geometry::chain(4).unwrap(), ModelParams::default());
    let table = s.sweep_points(&[12.0], true).unwrap();
    let direct = s.solve(12.0).unwrap();
    assert_eq!(table.points.len(), 1);
    for (a, b) in table.points[0].iter().zip(&direct) {
        assert_eq!(a.label(), b.label());
        assert!((a.energy - b.energy).abs() < 1e-10);
    }
    assert!(matches!(s.sweep_points(&[], false), Err(SpectralError::EmptyGrid)));
    assert!(matches!(s.sweep_points(&[1.0, 1.0], false), Err(SpectralError::GridNotAscending { .. })));
}
