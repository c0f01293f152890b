use tiltcert_core::certify::{
    classify_outcome, plan_tilts, simulate_protocol, single_tilt_solutions, CertificationPlan, CertifyError,
    Classification, ExpectationMode, ExpectationTable, PlanOptions,
};
use tiltcert_core::model::{build_charge_projectors, ChargeConfig, ChargeProjector, Geometry, ModelParams};
use tiltcert_core::opensys::{kl_distance, ChargeDistribution};
use tiltcert_core::spectral::{SpectrumOptions, SpectrumSolver, StateLabel};

fn config(s: &str) -> ChargeConfig {
    s.parse().unwrap()
}

fn four_targets() -> [StateLabel; 4] {
    [StateLabel::singlet(1), StateLabel::triplet(1), StateLabel::singlet(2), StateLabel::triplet(2)]
}

fn chain_table(n: usize, targets: &[StateLabel], mode: ExpectationMode) -> ExpectationTable {
    let solver =
        SpectrumSolver::new(Geometry::chain(n).unwrap(), ModelParams::default(), SpectrumOptions::with_k(6).requiring_lowest_pairs())
            .unwrap();
    let grid: Vec<f64> = (0..=140).map(|i| i as f64 * 0.5).collect();
    ExpectationTable::from_solver(&solver, targets, &grid, mode).unwrap()
}

fn two_config_projectors() -> Vec<ChargeProjector> {
    vec![
        ChargeProjector { config: config("20"), members: vec![0] },
        ChargeProjector { config: config("11"), members: vec![1] },
    ]
}

/// One tilt, two targets: A expects (2,0) and B expects (1,1).
fn binary_plan(expected_a: [f64; 2], expected_b: [f64; 2]) -> CertificationPlan {
    let p = two_config_projectors();
    let table = ExpectationTable::from_parts(
        vec![StateLabel::singlet(1), StateLabel::triplet(1)],
        vec![50.0],
        vec![vec![ChargeDistribution::from_weights(&p, &expected_a)], vec![ChargeDistribution::from_weights(&p, &expected_b)]],
    )
    .unwrap();
    CertificationPlan::for_tilts(&table, &[0], PlanOptions::default())
}

#[test]
fn four_site_plan_uses_two_tilts_and_decodes_the_named_outcomes() {
    let opts = PlanOptions::default();
    // Full eigenvector distributions and their dominant-configuration
    // roundings give the same tilts.
    let exact = chain_table(4, &four_targets(), ExpectationMode::Exact);
    let table = chain_table(4, &four_targets(), ExpectationMode::Dominant);
    let plan = plan_tilts(&table, &opts).unwrap();
    assert_eq!(plan_tilts(&exact, &opts).unwrap().tilts, plan.tilts);
    assert_eq!(plan.tilts.len(), 2);
    assert!((30.0..=40.0).contains(&plan.tilts[0]), "{:?}", plan.tilts);
    assert!((50.0..=60.0).contains(&plan.tilts[1]), "{:?}", plan.tilts);
    assert!(single_tilt_solutions(&exact, &opts).unwrap().is_empty());
    assert!(single_tilt_solutions(&table, &opts).unwrap().is_empty());

    let s1 = classify_outcome(&[config("2110"), config("2200")], &plan).unwrap();
    assert_eq!(s1, Classification::Label(StateLabel::singlet(1)));
    let t1 = classify_outcome(&[config("2110"), config("2110")], &plan).unwrap();
    assert_eq!(t1, Classification::Label(StateLabel::triplet(1)));
    // S2 is settled by the first tilt whatever the second shows.
    for second in ["2200", "2110", "1111"] {
        let s2 = classify_outcome(&[config("2200"), config(second)], &plan).unwrap();
        assert_eq!(s2, Classification::Label(StateLabel::singlet(2)));
    }
    assert_eq!(classify_outcome(&[config("1111"), config("1111")], &plan).unwrap(), Classification::Unrecognized);
    assert!(matches!(classify_outcome(&[config("2200")], &plan), Err(CertifyError::OutcomeCount { expected: 2, got: 1 })));

    // Noiseless expected outcomes replay to the right labels.
    for (t, &label) in plan.targets.iter().enumerate() {
        let outcomes = plan.expected_outcomes(t);
        assert_eq!(classify_outcome(&outcomes, &plan).unwrap(), Classification::Label(label));
        // Pure function of its inputs.
        assert_eq!(classify_outcome(&outcomes, &plan).unwrap(), classify_outcome(&outcomes, &plan).unwrap());
    }
    // Flattened rules cover every target exactly once.
    let rules = plan.rules();
    for &label in &plan.targets {
        assert_eq!(rules.iter().filter(|r| r.verdict == Classification::Label(label)).count(), 1);
    }
}

#[test]
fn ground_singlet_and_triplet_need_one_tilt() {
    let table = chain_table(4, &[StateLabel::singlet(1), StateLabel::triplet(1)], ExpectationMode::Dominant);
    let plan = plan_tilts(&table, &PlanOptions::default()).unwrap();
    assert_eq!(plan.tilts.len(), 1);
    assert!((50.0..=60.0).contains(&plan.tilts[0]), "{:?}", plan.tilts);
}

#[test]
fn identical_expectations_are_reported_as_unresolved() {
    let p = two_config_projectors();
    let d = ChargeDistribution::from_weights(&p, &[1.0, 0.0]);
    let table = ExpectationTable::from_parts(
        vec![StateLabel::singlet(1), StateLabel::triplet(1)],
        vec![0.0, 1.0],
        vec![vec![d.clone(), d.clone()], vec![d.clone(), d]],
    )
    .unwrap();
    match plan_tilts(&table, &PlanOptions::default()) {
        Err(CertifyError::Unresolved { pairs, tilts }) => {
            assert_eq!(pairs, vec![(StateLabel::singlet(1), StateLabel::triplet(1))]);
            assert!(tilts.is_empty());
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(plan_tilts(&table, &PlanOptions { threshold: 0.0, ..PlanOptions::default() }), Err(CertifyError::InvalidThreshold(_))));
}

#[test]
fn deterministic_outcomes_give_a_diagonal_confusion_matrix() {
    let plan = binary_plan([1.0, 0.0], [0.0, 1.0]);
    let truth: Vec<Vec<ChargeDistribution>> = (0..2).map(|t| vec![plan.expected[0][t].clone()]).collect();
    for shots in [1, 2, 7] {
        let m = simulate_protocol(&plan, &truth, shots, 200, 11).unwrap();
        assert!(m.is_diagonal());
        assert_eq!(m.row_total(0), 200);
        assert_eq!(m.row_total(1), 200);
    }
}

#[test]
fn single_shots_with_overlapping_supports_are_ambiguous() {
    let plan = binary_plan([0.6, 0.4], [0.3, 0.7]);
    let truth: Vec<Vec<ChargeDistribution>> = (0..2).map(|t| vec![plan.expected[0][t].clone()]).collect();
    let m = simulate_protocol(&plan, &truth, 1, 500, 3).unwrap();
    assert_eq!(m.ambiguous.iter().sum::<u64>(), 1000);
}

/// Probability that more than half of `m` draws (odd `m`) land on an
/// outcome of probability `q`.
fn majority_probability(q: f64, m: u32) -> f64 {
    let mut total = 0.0;
    for k in (m / 2 + 1)..=m {
        let ln_binom: f64 = (1..=k).map(|i| ((m - k + i) as f64 / i as f64).ln()).sum();
        total += (ln_binom + k as f64 * q.ln() + (m - k) as f64 * (1.0 - q).ln()).exp();
    }
    total
}

#[test]
fn error_rate_matches_the_majority_vote_oracle_and_falls_with_shots() {
    // Expected outcomes are definite; the true outcomes leak with p = 0.3.
    let plan = binary_plan([1.0, 0.0], [0.0, 1.0]);
    let p = two_config_projectors();
    let truth = vec![
        vec![ChargeDistribution::from_weights(&p, &[0.7, 0.3])],
        vec![ChargeDistribution::from_weights(&p, &[0.3, 0.7])],
    ];
    let half = ChargeDistribution::from_weights(&p, &[0.5, 0.5]);
    let chernoff = kl_distance(&half, &truth[0][0]).unwrap();
    let trials = 4000;
    let mut previous = f64::INFINITY;
    for shots in [1u32, 3, 5, 9, 15] {
        let mut errors = 0;
        for seed in 0..3 {
            errors += simulate_protocol(&plan, &truth, shots as usize, trials, seed).unwrap().total_errors();
        }
        let rate = errors as f64 / (2 * 3 * trials) as f64;
        let exact = majority_probability(0.3, shots);
        let sigma = (exact * (1.0 - exact) / (2 * 3 * trials) as f64).sqrt();
        assert!((rate - exact).abs() <= 4.0 * sigma + 1e-4, "M={shots}: {rate} vs {exact}");
        // Never more errors with more shots, up to sampling noise.
        assert!(rate <= previous + 4.0 * sigma, "M={shots}: {rate} after {previous}");
        previous = rate;
        // Chernoff: a wrong majority costs at most 2^{−M D(½‖q)}.
        assert!(exact <= 2f64.powf(-(shots as f64) * chernoff));
    }
}

#[test]
fn expectation_tables_validate_their_inputs() {
    let projectors = build_charge_projectors(&tiltcert_core::fock::BasisSector::half_filled(2).unwrap());
    let d = ChargeDistribution::definite(&projectors, &config("11")).unwrap();
    assert!(matches!(ExpectationTable::from_parts(vec![], vec![0.0], vec![]), Err(CertifyError::NoTargets)));
    assert!(matches!(
        ExpectationTable::from_parts(vec![StateLabel::singlet(1)], vec![0.0, 1.0], vec![vec![d.clone()]]),
        Err(CertifyError::TruthShape { .. })
    ));
    let mut table = ExpectationTable::from_parts(vec![StateLabel::singlet(1)], vec![0.0], vec![vec![d.clone()]]).unwrap();
    assert!(matches!(table.set(StateLabel::triplet(1), 0, d), Err(CertifyError::UnknownTarget(_))));
}
