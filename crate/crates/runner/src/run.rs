//! Experiment orchestration: physics in memory first, files only on success.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use tiltcert_core::certify::{
    misclassification_bound, pair_separated, plan_tilts, simulate_protocol, single_tilt_solutions, CertificationPlan, ExpectationMode,
    ExpectationTable, PlanOptions,
};
use tiltcert_core::dynamics::{
    complex_state, evolve_state, time_averaged_charge, IntegratorOptions, TiltSchedule,
};
use tiltcert_core::model::build_charge_projectors;
use tiltcert_core::opensys::{charge_distribution, evolve_lindblad, kl_distance, ChargeDistribution, DensityMatrix};
use tiltcert_core::spectral::{detect_anticrossings, min_gap, SpectrumOptions, SpectrumSolver, StateLabel};
use tiltcert_core::Complex64;

use crate::config::{
    validate_config, CertifyExperiment, EvolveExperiment, Experiment, ExperimentConfig, IntegratorSpec,
    LindbladExperiment, SpectrumExperiment, SweepExperiment, ValidationError,
};
use crate::output::{Cell, Metadata, OutputError, Table};
use crate::plan_file::PlanDocument;

/// Command-line overrides and output controls.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; `None` lets the pool pick.
    pub threads: Option<usize>,
    /// Stamp headers with the creation time.
    pub timestamps: bool,
}

/// Files written by a successful run, plus one-line findings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {}", join(.0))]
    Invalid(Vec<ValidationError>),
    #[error("{context}: {message}")]
    Failed { context: String, message: String },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("thread pool: {0}")]
    Threads(String),
}

fn join(errors: &[ValidationError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    status: &'static str,
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    errors: &'a [ValidationError],
}

impl RunError {
    pub fn code(&self) -> &'static str {
        match self {
            RunError::Invalid(_) => "validation",
            RunError::Failed { .. } => "computation",
            RunError::Output(_) => "output",
            RunError::Threads(_) => "threads",
        }
    }

    /// Single JSON line for machine consumption.
    pub fn json_line(&self) -> String {
        let errors = match self {
            RunError::Invalid(e) => e.as_slice(),
            _ => &[],
        };
        serde_json::to_string(&ErrorLine { status: "error", code: self.code(), message: self.to_string(), errors })
            .expect("error line serializes")
    }
}

fn failed(context: impl Into<String>) -> impl FnOnce(String) -> RunError {
    let context = context.into();
    move |message| RunError::Failed { context, message }
}

trait Context<T> {
    fn context(self, context: impl Into<String>) -> Result<T, RunError>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn context(self, context: impl Into<String>) -> Result<T, RunError> {
        self.map_err(|e| failed(context)(e.to_string()))
    }
}

/// Output produced in memory, written only once everything succeeded.
enum Artifact {
    Csv(Table),
    Text(String),
}

/// Applies overrides, validates, runs and writes the outputs.
pub fn run_config(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(dir) = &opts.output_dir {
        config.output_dir = dir.clone();
    }
    validate_config(&config).map_err(RunError::Invalid)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Threads(e.to_string()))?;
    let mut notes = Vec::new();
    let artifacts = pool.install(|| match &config.experiment {
        Experiment::Spectrum(e) => spectrum(&config, e),
        Experiment::Sweep(e) => sweep(&config, e, &mut notes),
        Experiment::Evolve(e) => evolve(&config, e, &mut notes),
        Experiment::Lindblad(e) => lindblad(&config, e, &mut notes),
        Experiment::Certify(e) => certify(&config, e, &mut notes),
    })?;

    let meta = Metadata {
        experiment: config.experiment.name().to_string(),
        seed: config.seed,
        config: config.to_toml(),
        timestamp: opts
            .timestamps
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)),
    };
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.clone(), source })?;
    let mut files = Vec::new();
    for (name, artifact) in artifacts {
        let path = dir.join(&name);
        match artifact {
            Artifact::Csv(table) => table.write(&path, &meta)?,
            Artifact::Text(body) => write_text(&path, &meta, &body)?,
        }
        files.push(path);
    }
    Ok(RunReport { files, notes })
}

fn write_text(path: &Path, meta: &Metadata, body: &str) -> Result<(), OutputError> {
    let mut text = Vec::new();
    meta.write_to(&mut text).expect("writing to memory");
    text.extend_from_slice(body.as_bytes());
    fs::write(path, text).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

fn labels(names: &[String]) -> Vec<StateLabel> {
    names.iter().map(|n| n.parse().expect("labels are validated")).collect()
}

fn solver_for(config: &ExperimentConfig, required: &[StateLabel]) -> Result<SpectrumSolver, RunError> {
    let geometry = config.certify_geometry().map_err(failed("geometry"))?;
    let options = SpectrumOptions {
        k: config.solver.states,
        tolerance: config.solver.tolerance,
        required: required.to_vec(),
        seed: config.seed,
        ..SpectrumOptions::default()
    };
    SpectrumSolver::new(geometry, config.params.model(), options).context("building the Hamiltonian")
}

fn site_columns(sites: usize) -> impl Iterator<Item = String> {
    (1..=sites).map(|k| format!("n_{k}"))
}

fn nums(values: &[f64]) -> impl Iterator<Item = Cell> + '_ {
    values.iter().map(|&x| Cell::Num(x))
}

fn spectrum(config: &ExperimentConfig, e: &SpectrumExperiment) -> Result<Vec<(String, Artifact)>, RunError> {
    let solver = solver_for(config, &[])?;
    let records = solver.solve(e.eps).context(format!("solving at eps = {}", e.eps))?;
    let sites = solver.geometry().sites();
    let mut table = Table::new(
        ["eps", "state", "energy", "s_squared", "residual"].into_iter().map(String::from).chain(site_columns(sites)),
    );
    for r in &records {
        let mut row = vec![e.eps.into(), r.label().to_string().into(), r.energy.into(), r.s_squared.into(), r.residual.into()];
        row.extend(nums(&r.charge_profile));
        table.push(row);
    }
    Ok(vec![("spectrum.csv".into(), Artifact::Csv(table))])
}

fn sweep(
    config: &ExperimentConfig,
    e: &SweepExperiment,
    notes: &mut Vec<String>,
) -> Result<Vec<(String, Artifact)>, RunError> {
    let required: Vec<StateLabel> =
        e.gap_spins.iter().flat_map(|&s| [StateLabel::new(s, 1), StateLabel::new(s, 2)]).collect();
    let solver = solver_for(config, &required)?;
    let table = solver.sweep_points(&e.grid.values(), false).context("sweeping the tilt grid")?;
    let sites = solver.geometry().sites();
    let mut rows = Table::new(["eps", "state", "energy"].into_iter().map(String::from).chain(site_columns(sites)));
    for (eps, points) in table.eps.iter().zip(&table.points) {
        for r in points {
            let mut row = vec![(*eps).into(), r.label().to_string().into(), r.energy.into()];
            row.extend(nums(&r.charge_profile));
            rows.push(row);
        }
    }
    let mut gaps = Table::new(["two_s", "lower", "upper", "grid_eps", "grid_gap", "eps", "gap", "adiabatic_time"]);
    let mut crossings = Table::new(["two_s", "eps", "gap", "bracket_lo", "bracket_hi"]);
    for &s in &e.gap_spins {
        let (a, b) = (StateLabel::new(s, 1), StateLabel::new(s, 2));
        let m = min_gap(&solver, &table, s).context(format!("gap minimum for {a}/{b}"))?;
        notes.push(format!("min gap {a}/{b}: {:.4} at eps = {:.3}", m.gap, m.eps));
        gaps.push(vec![
            (s as u64).into(),
            a.to_string().into(),
            b.to_string().into(),
            m.grid_eps.into(),
            m.grid_gap.into(),
            m.eps.into(),
            m.gap.into(),
            (1.0 / (m.gap * m.gap)).into(),
        ]);
        for ac in detect_anticrossings(&solver, &table, s).context(format!("anti-crossings of {a}/{b}"))? {
            crossings.push(vec![(s as u64).into(), ac.eps.into(), ac.gap.into(), ac.bracket.0.into(), ac.bracket.1.into()]);
        }
    }
    Ok(vec![
        ("sweep.csv".into(), Artifact::Csv(rows)),
        ("gaps.csv".into(), Artifact::Csv(gaps)),
        ("anticrossings.csv".into(), Artifact::Csv(crossings)),
    ])
}

fn integrator(spec: &IntegratorSpec, base: IntegratorOptions, keep_states: bool) -> IntegratorOptions {
    IntegratorOptions {
        samples: spec.samples,
        hold_samples: spec.hold_samples,
        tolerance: spec.tolerance.unwrap_or(base.tolerance),
        max_step: spec.max_step,
        keep_states,
        ..base
    }
}

fn initial_state(solver: &SpectrumSolver, label: StateLabel) -> Result<Vec<Complex64>, RunError> {
    let records = solver.solve(0.0).context("solving at zero tilt")?;
    let r = records
        .iter()
        .find(|r| r.label() == label)
        .ok_or_else(|| failed("initial state")(format!("{label} is not among the computed states")))?;
    Ok(complex_state(&r.vector))
}

fn evolve(
    config: &ExperimentConfig,
    e: &EvolveExperiment,
    notes: &mut Vec<String>,
) -> Result<Vec<(String, Artifact)>, RunError> {
    let states = labels(&e.states);
    let solver = solver_for(config, &states)?;
    let schedule = TiltSchedule::new(e.ramp.t_max, e.ramp.eps_max, e.ramp.hold).context("ramp")?;
    let opts = integrator(&e.integrator, IntegratorOptions::default(), false);
    let runs: Vec<_> = states
        .par_iter()
        .map(|&label| {
            let psi0 = initial_state(&solver, label)?;
            evolve_state(&psi0, &solver, &schedule, &opts, Some(label)).context(format!("evolving {label}"))
        })
        .collect::<Result<_, _>>()?;
    let sites = solver.geometry().sites();
    let mut out = Vec::new();
    let mut summary = Table::new(
        ["state", "min_fidelity", "tau_at_min", "eps_at_min", "final_fidelity", "steps"]
            .into_iter()
            .map(String::from)
            .chain((1..=sites).map(|k| format!("hold_n_{k}"))),
    );
    for (label, traj) in states.iter().zip(&runs) {
        let fidelity = traj.fidelity.as_ref().expect("tracked run");
        let mut t = Table::new(["tau", "eps", "fidelity"].into_iter().map(String::from).chain(site_columns(sites)));
        for (((&tau, &eps), &f), profile) in traj.times.iter().zip(&traj.eps).zip(fidelity).zip(&traj.charge_profiles) {
            let mut row = vec![tau.into(), eps.into(), f.into()];
            row.extend(nums(profile));
            t.push(row);
        }
        out.push((format!("trajectory_{label}.csv"), Artifact::Csv(t)));
        let (tau_min, f_min) = traj.min_fidelity().expect("tracked run");
        let j_min = traj.times.iter().position(|&t| t == tau_min).expect("sampled time");
        let hold = if e.ramp.hold > 0.0 {
            time_averaged_charge(traj, schedule.ramp_time, schedule.total_time()).context("hold average")?
        } else {
            traj.charge_profiles.last().expect("samples").clone()
        };
        let f_end = *fidelity.last().expect("samples");
        notes.push(format!("{label}: min fidelity {f_min:.4} at tau = {tau_min:.1}, final {f_end:.4}"));
        let mut row = vec![
            label.to_string().into(),
            f_min.into(),
            tau_min.into(),
            traj.eps[j_min].into(),
            f_end.into(),
            traj.steps.into(),
        ];
        row.extend(nums(&hold));
        summary.push(row);
    }
    out.push(("evolve_summary.csv".into(), Artifact::Csv(summary)));
    Ok(out)
}

fn lindblad(
    config: &ExperimentConfig,
    e: &LindbladExperiment,
    notes: &mut Vec<String>,
) -> Result<Vec<(String, Artifact)>, RunError> {
    let states = labels(&e.states);
    let solver = solver_for(config, &states)?;
    let schedule = TiltSchedule::new(e.ramp.t_max, e.ramp.eps_max, e.ramp.hold).context("ramp")?;
    let opts = integrator(&e.integrator, IntegratorOptions::for_lindblad(), false);
    let initial: Vec<DensityMatrix> =
        states.iter().map(|&l| initial_state(&solver, l).map(|psi| DensityMatrix::pure(&psi))).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..e.gammas.len()).flat_map(|g| (0..states.len()).map(move |s| (g, s))).collect();
    let runs: Vec<_> = jobs
        .par_iter()
        .map(|&(g, s)| {
            evolve_lindblad(&initial[s], &solver, &schedule, e.gammas[g], &opts, Some(states[s]))
                .context(format!("dephasing {} at gamma = {}", states[s], e.gammas[g]))
        })
        .collect::<Result<_, _>>()?;
    let sites = solver.geometry().sites();
    let mut out = Vec::new();
    let mut summary = Table::new([
        "gamma",
        "state",
        "final_fidelity",
        "min_fidelity",
        "final_purity",
        "final_entropy_bits",
        "largest_entropy_step",
        "eps_at_largest_step",
        "steps",
    ]);
    let mut finals: BTreeMap<(usize, usize), ChargeDistribution> = BTreeMap::new();
    for (&(g, s), traj) in jobs.iter().zip(&runs) {
        let tag = format!("{}_g{g}", states[s]);
        let mut t = Table::new(
            ["tau", "eps", "trace", "purity", "entropy_bits"].into_iter().map(String::from).chain(site_columns(sites)),
        );
        for j in 0..traj.times.len() {
            let mut row =
                vec![traj.times[j].into(), traj.eps[j].into(), traj.trace[j].into(), traj.purity[j].into(), traj.entropy[j].into()];
            row.extend(nums(&traj.charge_profiles[j]));
            t.push(row);
        }
        out.push((format!("decoherence_{tag}.csv"), Artifact::Csv(t)));
        let last = traj.final_distribution();
        let mut d = Table::new(["config", "p"]);
        for (c, p) in last.iter() {
            d.push(vec![c.to_string().into(), p.into()]);
        }
        out.push((format!("distribution_{tag}.csv"), Artifact::Csv(d)));
        let fidelity = traj.fidelity.as_ref().expect("tracked run");
        let (step, at) = traj
            .entropy
            .windows(2)
            .enumerate()
            .map(|(j, w)| (w[1] - w[0], traj.eps[j + 1]))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((0.0, traj.eps[0]));
        summary.push(vec![
            e.gammas[g].into(),
            states[s].to_string().into(),
            (*fidelity.last().expect("samples")).into(),
            fidelity.iter().copied().fold(f64::INFINITY, f64::min).into(),
            (*traj.purity.last().expect("samples")).into(),
            (*traj.entropy.last().expect("samples")).into(),
            step.into(),
            at.into(),
            traj.steps.into(),
        ]);
        finals.insert((g, s), last);
    }
    let mut kl = Table::new(["gamma", "state_a", "state_b", "d_ab", "d_ba"]);
    for (g, &gamma) in e.gammas.iter().enumerate() {
        for a in 0..states.len() {
            for b in a + 1..states.len() {
                let (p, q) = (&finals[&(g, a)], &finals[&(g, b)]);
                let d_ab = kl_distance(p, q).context("KL distance")?;
                let d_ba = kl_distance(q, p).context("KL distance")?;
                notes.push(format!("gamma = {gamma}: d({}, {}) = {d_ab:.3}", states[a], states[b]));
                kl.push(vec![gamma.into(), states[a].to_string().into(), states[b].to_string().into(), d_ab.into(), d_ba.into()]);
            }
        }
    }
    out.push(("lindblad_summary.csv".into(), Artifact::Csv(summary)));
    out.push(("kl.csv".into(), Artifact::Csv(kl)));
    Ok(out)
}

/// Actual outcome distributions of every target at every plan tilt.
fn truth_distributions(
    solver: &SpectrumSolver,
    plan: &CertificationPlan,
    e: &CertifyExperiment,
) -> Result<Vec<Vec<ChargeDistribution>>, RunError> {
    let Some(gamma) = e.gamma else {
        let exact = ExpectationTable::from_solver(solver, &plan.targets, &plan.tilts, ExpectationMode::Exact)
            .context("eigenstate distributions at the plan tilts")?;
        return Ok((0..plan.targets.len()).map(|t| (0..plan.tilts.len()).map(|i| exact.get(t, i).clone()).collect()).collect());
    };
    let projectors = build_charge_projectors(solver.sector());
    let initial: Vec<Vec<Complex64>> =
        plan.targets.iter().map(|&l| initial_state(solver, l)).collect::<Result<_, _>>()?;
    let base = if gamma > 0.0 { IntegratorOptions::for_lindblad() } else { IntegratorOptions::default() };
    let opts = IntegratorOptions { samples: 2, ..integrator(&e.integrator, base, gamma == 0.0) };
    let jobs: Vec<(usize, usize)> =
        (0..plan.targets.len()).flat_map(|t| (0..plan.tilts.len()).map(move |i| (t, i))).collect();
    let dists: Vec<ChargeDistribution> = jobs
        .par_iter()
        .map(|&(t, i)| {
            let tilt = plan.tilts[i];
            let ramp = e.truth_ramp.t_max * tilt.abs() / e.truth_ramp.eps_max;
            let context = format!("ramping {} to eps = {tilt}", plan.targets[t]);
            // Nothing to ramp at zero tilt: the state is still the eigenstate.
            if ramp == 0.0 {
                return Ok(charge_distribution(&DensityMatrix::pure(&initial[t]), &projectors));
            }
            let schedule = TiltSchedule::new(ramp, tilt, e.truth_ramp.hold).context(context.clone())?;
            if gamma > 0.0 {
                let traj = evolve_lindblad(&DensityMatrix::pure(&initial[t]), solver, &schedule, gamma, &opts, None)
                    .context(context)?;
                Ok(traj.final_distribution())
            } else {
                let traj = evolve_state(&initial[t], solver, &schedule, &opts, None).context(context)?;
                Ok(charge_distribution(&DensityMatrix::pure(traj.states.last().expect("kept states")), &projectors))
            }
        })
        .collect::<Result<_, RunError>>()?;
    Ok(dists.chunks(plan.tilts.len()).map(<[_]>::to_vec).collect())
}

fn certify(
    config: &ExperimentConfig,
    e: &CertifyExperiment,
    notes: &mut Vec<String>,
) -> Result<Vec<(String, Artifact)>, RunError> {
    let targets = labels(&e.targets);
    let solver = solver_for(config, &targets)?;
    let grid = e.grid.values();
    let options = PlanOptions { threshold: e.threshold, margin: e.margin, support_floor: e.support_floor };
    let table =
        ExpectationTable::from_solver(&solver, &targets, &grid, e.mode.into()).context("expected distributions")?;
    let plan = plan_tilts(&table, &options).context("planning tilts")?;
    let singles = single_tilt_solutions(&table, &options).context("single-tilt search")?;
    let blocks = e.block_size.map_or(1, |b| config.geometry.sites / b);
    notes.push(format!(
        "{} tilts at {:?}; {} single-tilt solutions; {blocks} block(s)",
        plan.tilts.len(),
        plan.tilts,
        singles.len()
    ));

    let truth = truth_distributions(&solver, &plan, e)?;
    let confusion = simulate_protocol(&plan, &truth, e.shots, e.trials, config.seed).context("protocol simulation")?;
    let mut matrix = Table::new(
        std::iter::once("state".to_string())
            .chain(confusion.labels.iter().map(|l| l.to_string()))
            .chain(["ambiguous", "unrecognized", "errors", "error_rate"].map(String::from)),
    );
    for (t, label) in confusion.labels.iter().enumerate() {
        let mut row: Vec<Cell> = vec![label.to_string().into()];
        row.extend(confusion.counts[t].iter().map(|&c| Cell::Int(c)));
        row.push(confusion.ambiguous[t].into());
        row.push(confusion.unrecognized[t].into());
        row.push(confusion.errors(t).into());
        row.push((confusion.errors(t) as f64 / confusion.row_total(t) as f64).into());
        matrix.push(row);
    }
    notes.push(format!("{} misclassified of {}", confusion.total_errors(), e.trials * targets.len()));

    let mut separations =
        Table::new(["tilt", "state_a", "state_b", "expected_separation", "separated", "true_d_ab", "true_d_ba", "bound"]);
    for (i, &tilt) in plan.tilts.iter().enumerate() {
        let j = grid.iter().position(|&x| x == tilt).expect("plan tilts come from the grid");
        for a in 0..targets.len() {
            for b in a + 1..targets.len() {
                let sep = table.separation(a, b, j).context("separation")?;
                let ok = pair_separated(&table, &options, a, b, j).context("separation")?;
                let d_ab = kl_distance(&truth[a][i], &truth[b][i]).context("KL distance")?;
                let d_ba = kl_distance(&truth[b][i], &truth[a][i]).context("KL distance")?;
                separations.push(vec![
                    tilt.into(),
                    targets[a].to_string().into(),
                    targets[b].to_string().into(),
                    sep.into(),
                    (ok as u64).into(),
                    d_ab.into(),
                    d_ba.into(),
                    misclassification_bound(d_ab.min(d_ba), e.shots).into(),
                ]);
            }
        }
    }
    Ok(vec![
        ("plan.toml".into(), Artifact::Text(PlanDocument::from_plan(&plan, blocks).to_toml())),
        ("confusion.csv".into(), Artifact::Csv(matrix)),
        ("separations.csv".into(), Artifact::Csv(separations)),
    ])
}
