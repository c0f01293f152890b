use num_complex::Complex64;
use tiltcert_core::dynamics::{
    complex_state, evolve_state, DynamicsError, IntegratorOptions, StateTrajectory, TiltSchedule,
};
use tiltcert_core::linalg::SymmetricOperator;
use tiltcert_core::model::{Geometry, ModelParams};
use tiltcert_core::spectral::{SpectrumOptions, SpectrumSolver, StateLabel};

fn solver(n: usize) -> SpectrumSolver {
    SpectrumSolver::new(Geometry::chain(n).unwrap(), ModelParams::default(), SpectrumOptions::with_k(6).requiring_lowest_pairs())
        .unwrap()
}

fn eigenstate(solver: &SpectrumSolver, eps: f64, label: StateLabel) -> Vec<Complex64> {
    let records = solver.solve(eps).unwrap();
    complex_state(&records.iter().find(|r| r.label() == label).unwrap().vector)
}

fn final_fidelity(traj: &StateTrajectory) -> f64 {
    *traj.fidelity.as_ref().unwrap().last().unwrap()
}

/// Classical RK4 on `i ψ' = H(ε(τ)) ψ` with a fixed small step.
fn rk4_reference(solver: &SpectrumSolver, psi0: &[Complex64], schedule: &TiltSchedule, dt: f64) -> Vec<Complex64> {
    let h = solver.hamiltonian();
    let n = psi0.len();
    let rhs = |tau: f64, psi: &[Complex64]| {
        let mut out = vec![Complex64::default(); n];
        h.at(tiltcert_core::dynamics::schedule_epsilon(tau, schedule)).apply_complex(psi, &mut out);
        out.iter_mut().for_each(|x| *x *= -Complex64::i());
        out
    };
    let steps = (schedule.total_time() / dt).round() as usize;
    let dt = schedule.total_time() / steps as f64;
    let mut psi = psi0.to_vec();
    for s in 0..steps {
        let t = s as f64 * dt;
        let add = |a: &[Complex64], b: &[Complex64], c: f64| a.iter().zip(b).map(|(x, y)| x + y * c).collect::<Vec<_>>();
        let k1 = rhs(t, &psi);
        let k2 = rhs(t + dt / 2.0, &add(&psi, &k1, dt / 2.0));
        let k3 = rhs(t + dt / 2.0, &add(&psi, &k2, dt / 2.0));
        let k4 = rhs(t + dt, &add(&psi, &k3, dt));
        for i in 0..n {
            psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
    psi
}

#[test]
fn matches_a_fixed_step_reference_on_a_fast_ramp() {
    let s = solver(4);
    let psi0 = eigenstate(&s, 0.0, StateLabel::singlet(1));
    let schedule = TiltSchedule::new(40.0, 70.0, 5.0).unwrap();
    let opts = IntegratorOptions { samples: 11, ..IntegratorOptions::default() };
    let traj = evolve_state(&psi0, &s, &schedule, &opts, None).unwrap();
    let reference = rk4_reference(&s, &psi0, &schedule, 2.5e-5);
    let got = traj.states.last().unwrap();
    let err: f64 = got.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    assert!(err < 1e-6, "distance to reference {err}");
}

#[test]
fn norm_and_total_spin_are_conserved() {
    let s = solver(4);
    let a = eigenstate(&s, 0.0, StateLabel::singlet(1));
    let b = eigenstate(&s, 0.0, StateLabel::triplet(1));
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mixed: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * r + y * Complex64::new(0.0, r)).collect();
    let schedule = TiltSchedule::new(500.0, 70.0, 50.0).unwrap();
    let opts = IntegratorOptions { samples: 101, ..IntegratorOptions::default() };
    for psi0 in [a, mixed] {
        let traj = evolve_state(&psi0, &s, &schedule, &opts, None).unwrap();
        let s0 = traj.s_squared[0];
        for (norm, s2) in traj.norms.iter().zip(&traj.s_squared) {
            assert!((norm - 1.0).abs() <= 10.0 * opts.tolerance, "norm {norm}");
            assert!((s2 - s0).abs() <= 10.0 * opts.tolerance, "S² drifted from {s0} to {s2}");
        }
        for profile in &traj.charge_profiles {
            assert!((profile.iter().sum::<f64>() - 4.0).abs() < 1e-8);
        }
    }
}

#[test]
fn eigenstates_of_a_static_hamiltonian_are_stationary() {
    let s = solver(4);
    let psi0 = eigenstate(&s, 0.0, StateLabel::triplet(1));
    let schedule = TiltSchedule::new(300.0, 0.0, 300.0).unwrap();
    let opts = IntegratorOptions { samples: 31, hold_samples: 10, ..IntegratorOptions::default() };
    let traj = evolve_state(&psi0, &s, &schedule, &opts, Some(StateLabel::triplet(1))).unwrap();
    for f in traj.fidelity.as_ref().unwrap() {
        assert!((f - 1.0).abs() < 1e-8, "fidelity {f}");
    }
    for p in &traj.charge_profiles {
        for (x, y) in p.iter().zip(&traj.charge_profiles[0]) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn rejects_bad_initial_states_and_schedules() {
    let s = solver(2);
    let schedule = TiltSchedule::new(10.0, 5.0, 0.0).unwrap();
    let opts = IntegratorOptions::default();
    let short = vec![Complex64::new(1.0, 0.0); 3];
    assert!(matches!(evolve_state(&short, &s, &schedule, &opts, None), Err(DynamicsError::DimensionMismatch { .. })));
    let unnormalised = vec![Complex64::new(1.0, 0.0); 4];
    assert!(matches!(evolve_state(&unnormalised, &s, &schedule, &opts, None), Err(DynamicsError::NotNormalized { .. })));
    assert!(TiltSchedule::new(0.0, 5.0, 0.0).is_err());
    assert!(TiltSchedule::new(10.0, f64::NAN, 0.0).is_err());
    assert!(TiltSchedule::new(10.0, 5.0, -1.0).is_err());
}

#[test]
fn slower_ramps_track_the_ground_singlet_better() {
    let s = solver(4);
    let psi0 = eigenstate(&s, 0.0, StateLabel::singlet(1));
    let table = s.sweep_points(&(0..=140).map(|i| i as f64 * 0.5).collect::<Vec<_>>(), false).unwrap();
    let windows: Vec<(f64, f64)> = s
        .detect_anticrossings_between(&table, StateLabel::singlet(1), StateLabel::singlet(2))
        .unwrap()
        .iter()
        .map(|ac| (ac.eps - 1.5, ac.eps + 1.5))
        .collect();
    assert!(!windows.is_empty());
    let opts = IntegratorOptions { samples: 141, keep_states: false, ..IntegratorOptions::default() };
    let mut last = 0.0;
    let mut slowest = None;
    for ramp in [2.5e3, 5e3, 1e4, 2e4] {
        let schedule = TiltSchedule::new(ramp, 70.0, 0.0).unwrap();
        let traj = evolve_state(&psi0, &s, &schedule, &opts, Some(StateLabel::singlet(1))).unwrap();
        let f = final_fidelity(&traj);
        assert!(f >= last - 1e-6, "final fidelity fell from {last} to {f} at T = {ramp}");
        last = f;
        slowest = Some(traj);
    }
    // Away from the anti-crossings the slow run follows the instantaneous
    // eigenstate's charge profile.
    let traj = slowest.unwrap();
    let mut guesses: Vec<Vec<f64>> = Vec::new();
    for (eps, profile) in traj.eps.iter().zip(&traj.charge_profiles) {
        if windows.iter().any(|&(a, b)| *eps >= a && *eps <= b) {
            continue;
        }
        let records = s.solve_requiring(*eps, &guesses, &[StateLabel::singlet(1)]).unwrap();
        let r = records.iter().find(|r| r.label() == StateLabel::singlet(1)).unwrap();
        for (x, y) in profile.iter().zip(&r.charge_profile) {
            assert!((x - y).abs() <= 0.1, "at eps {eps}: {profile:?} vs {:?}", r.charge_profile);
        }
        guesses = records.into_iter().map(|r| r.vector).collect();
    }
}
