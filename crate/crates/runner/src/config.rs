//! Experiment configuration: schema, defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tiltcert_core::model::{Geometry, ModelParams};
use tiltcert_core::opensys::MAX_DENSITY_DIM;
use tiltcert_core::spectral::StateLabel;
use tiltcert_core::{BasisSector, ExpectationMode};

/// Largest supported site count; sectors beyond it are out of reach.
pub const MAX_SITES: usize = 12;

/// One experiment, fully described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub experiment: Experiment,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryName {
    Chain,
    Ladder,
}

/// Lattice shape; `sites` counts every site, so a `2 × C` ladder has `2C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub kind: GeometryName,
    pub sites: usize,
}

impl GeometrySpec {
    pub fn build(&self) -> Result<Geometry, String> {
        let built = match self.kind {
            GeometryName::Chain => Geometry::chain(self.sites),
            GeometryName::Ladder => Geometry::ladder(self.sites / 2),
        };
        built.map_err(|e| e.to_string())
    }
}

/// Model energies in units of the tunnelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default = "one")]
    pub t: f64,
    #[serde(rename = "U", default = "default_u")]
    pub u: f64,
    #[serde(rename = "V", default = "default_v")]
    pub v: f64,
    #[serde(default = "one")]
    pub hop_sign: f64,
}

fn one() -> f64 {
    1.0
}
fn default_u() -> f64 {
    40.0
}
fn default_v() -> f64 {
    10.0
}

impl Default for ParamsSpec {
    fn default() -> Self {
        ParamsSpec { t: 1.0, u: 40.0, v: 10.0, hop_sign: 1.0 }
    }
}

impl ParamsSpec {
    pub fn model(&self) -> ModelParams {
        ModelParams { t: self.t, u: self.u, v: self.v, hop_sign: self.hop_sign }
    }
}

/// Eigensolver controls shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Lowest states reported per tilt.
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_solver_tolerance")]
    pub tolerance: f64,
}

fn default_states() -> usize {
    6
}
fn default_solver_tolerance() -> f64 {
    1e-9
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { states: default_states(), tolerance: default_solver_tolerance() }
    }
}

/// Tilt grid: explicit points or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points { points: Vec<f64> },
    Range { start: f64, stop: f64, step: f64 },
}

impl GridSpec {
    /// Grid values; empty when the range is empty or malformed.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridSpec::Points { ref points } => points.clone(),
            GridSpec::Range { start, stop, step } => {
                if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
                    return Vec::new();
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

/// Adaptive propagation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// Uniform samples over the run, endpoints included.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Extra uniform samples inside the hold.
    #[serde(default)]
    pub hold_samples: usize,
    /// Local error bound per step; the experiment picks a default if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

fn default_samples() -> usize {
    701
}
fn default_max_step() -> f64 {
    10.0
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec { samples: default_samples(), hold_samples: 0, tolerance: None, max_step: default_max_step() }
    }
}

/// Linear ramp from zero to `eps_max` over `t_max`, then a hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSpec {
    pub t_max: f64,
    pub eps_max: f64,
    #[serde(default)]
    pub hold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Experiment {
    Spectrum(SpectrumExperiment),
    Sweep(SweepExperiment),
    Evolve(EvolveExperiment),
    Lindblad(LindbladExperiment),
    Certify(CertifyExperiment),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum(_) => "spectrum",
            Experiment::Sweep(_) => "sweep",
            Experiment::Evolve(_) => "evolve",
            Experiment::Lindblad(_) => "lindblad",
            Experiment::Certify(_) => "certify",
        }
    }
}

/// Labelled low-energy eigenstates at one tilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumExperiment {
    #[serde(default)]
    pub eps: f64,
}

/// Eigenstates over a tilt grid, plus gap minima and anti-crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepExperiment {
    pub grid: GridSpec,
    /// Spin values `2S` whose lowest gaps are analysed.
    #[serde(default = "default_gap_spins")]
    pub gap_spins: Vec<u32>,
}

fn default_gap_spins() -> Vec<u32> {
    vec![0, 2]
}

/// Closed-system ramps started from zero-tilt eigenstates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveExperiment {
    pub states: Vec<String>,
    pub ramp: RampSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
}

/// Dephasing ramps for every listed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladExperiment {
    pub states: Vec<String>,
    pub gammas: Vec<f64>,
    pub ramp: RampSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Exact,
    Dominant,
}

impl From<ModeName> for ExpectationMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Exact => ExpectationMode::Exact,
            ModeName::Dominant => ExpectationMode::Dominant,
        }
    }
}

/// Tilt planning and Monte Carlo of the measurement protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyExperiment {
    pub targets: Vec<String>,
    pub grid: GridSpec,
    #[serde(default = "one")]
    pub threshold: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_support_floor")]
    pub support_floor: f64,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    /// Shots per tilt.
    #[serde(default = "default_shots")]
    pub shots: usize,
    /// Protocol repetitions per target.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Source of the true outcome distributions. Unset: exact eigenstate
    /// distributions at the planned tilts. `0`: closed-system ramps.
    /// Positive: dephasing ramps at this rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Ramp rate for evolved truths: `eps_max` reached after `t_max`.
    #[serde(default = "default_truth_ramp")]
    pub truth_ramp: RampSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    /// Split a chain into independent blocks of this many sites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
}

fn default_margin() -> f64 {
    5.0
}
fn default_support_floor() -> f64 {
    0.05
}
fn default_mode() -> ModeName {
    ModeName::Dominant
}
fn default_shots() -> usize {
    100
}
fn default_trials() -> usize {
    1000
}
fn default_truth_ramp() -> RampSpec {
    RampSpec { t_max: 2e4, eps_max: 70.0, hold: 0.0 }
}

/// One problem found in a config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    /// Dotted path of the offending field, such as `params.U`.
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    /// Parses TOML text.
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Chain chosen for a certify experiment: the block if one is set.
    pub fn certify_geometry(&self) -> Result<Geometry, String> {
        match &self.experiment {
            Experiment::Certify(CertifyExperiment { block_size: Some(b), .. }) => {
                Geometry::chain(*b).map_err(|e| e.to_string())
            }
            _ => self.geometry.build(),
        }
    }
}

struct Collector(Vec<ValidationError>);

impl Collector {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationError { field: field.into(), message: message.into() });
    }

    fn finite(&mut self, field: &str, value: f64) -> bool {
        if value.is_finite() {
            true
        } else {
            self.push(field, format!("must be finite, got {value}"));
            false
        }
    }

    fn non_negative(&mut self, field: &str, value: f64) {
        if self.finite(field, value) && value < 0.0 {
            self.push(field, format!("must be non-negative, got {value}"));
        }
    }

    fn positive(&mut self, field: &str, value: f64) {
        if self.finite(field, value) && value <= 0.0 {
            self.push(field, format!("must be positive, got {value}"));
        }
    }

    fn labels(&mut self, field: &str, labels: &[String]) {
        if labels.is_empty() {
            self.push(field, "needs at least one state label");
        }
        let mut seen = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            match l.parse::<StateLabel>() {
                Ok(label) if seen.contains(&label) => self.push(format!("{field}[{i}]"), format!("duplicate label {l}")),
                Ok(label) => seen.push(label),
                Err(e) => self.push(format!("{field}[{i}]"), e),
            }
        }
    }

    fn grid(&mut self, field: &str, grid: &GridSpec) {
        if let GridSpec::Range { start, stop, step } = *grid {
            self.finite(&format!("{field}.start"), start);
            self.finite(&format!("{field}.stop"), stop);
            self.positive(&format!("{field}.step"), step);
        }
        let values = grid.values();
        if values.is_empty() {
            self.push(field, "grid is empty");
            return;
        }
        if values.iter().any(|x| !x.is_finite()) {
            self.push(field, "grid values must be finite");
        } else if values.windows(2).any(|w| w[1] <= w[0]) {
            self.push(field, "grid must be strictly ascending");
        }
    }

    fn ramp(&mut self, field: &str, ramp: &RampSpec) {
        self.positive(&format!("{field}.t_max"), ramp.t_max);
        self.finite(&format!("{field}.eps_max"), ramp.eps_max);
        self.non_negative(&format!("{field}.hold"), ramp.hold);
    }

    fn integrator(&mut self, field: &str, spec: &IntegratorSpec) {
        if spec.samples < 2 {
            self.push(format!("{field}.samples"), "needs at least 2 samples");
        }
        if let Some(tol) = spec.tolerance {
            if !(tol > 0.0 && tol <= 1e-2) {
                self.push(format!("{field}.tolerance"), format!("must lie in (0, 1e-2], got {tol}"));
            }
        }
        self.positive(&format!("{field}.max_step"), spec.max_step);
    }
}

/// Structural and range checks. Never runs any physics.
pub fn validate_config(config: &ExperimentConfig) -> Result<(), Vec<ValidationError>> {
    let mut c = Collector(Vec::new());
    let sites = config.geometry.sites;
    if !(2..=MAX_SITES).contains(&sites) {
        c.push("geometry.sites", format!("must lie in 2..={MAX_SITES}, got {sites}"));
    } else {
        match config.geometry.kind {
            GeometryName::Chain if sites % 2 != 0 => {
                c.push("geometry.sites", format!("half filling needs an even chain, got {sites}"))
            }
            GeometryName::Ladder if sites % 2 != 0 => {
                c.push("geometry.sites", format!("ladder sites pair into two-site columns, {sites} is odd"))
            }
            GeometryName::Ladder if sites < 4 => c.push("geometry.sites", "a ladder needs at least 2 columns"),
            _ => {}
        }
    }
    let p = &config.params;
    c.non_negative("params.t", p.t);
    c.non_negative("params.U", p.u);
    c.non_negative("params.V", p.v);
    if p.hop_sign != 1.0 && p.hop_sign != -1.0 {
        c.push("params.hop_sign", format!("must be +1 or -1, got {}", p.hop_sign));
    }
    if config.solver.states == 0 {
        c.push("solver.states", "must be at least 1");
    }
    if !(config.solver.tolerance > 0.0 && config.solver.tolerance < 1e-3) {
        c.push("solver.tolerance", format!("must lie in (0, 1e-3), got {}", config.solver.tolerance));
    }
    if config.output_dir.as_os_str().is_empty() {
        c.push("output_dir", "must not be empty");
    }
    match &config.experiment {
        Experiment::Spectrum(e) => {
            c.finite("experiment.eps", e.eps);
        }
        Experiment::Sweep(e) => {
            c.grid("experiment.grid", &e.grid);
            if e.gap_spins.iter().any(|&s| s % 2 != 0) {
                c.push("experiment.gap_spins", "half filling with even sites has integer spin only");
            }
        }
        Experiment::Evolve(e) => {
            c.labels("experiment.states", &e.states);
            c.ramp("experiment.ramp", &e.ramp);
            c.integrator("experiment.integrator", &e.integrator);
        }
        Experiment::Lindblad(e) => {
            c.labels("experiment.states", &e.states);
            c.ramp("experiment.ramp", &e.ramp);
            c.integrator("experiment.integrator", &e.integrator);
            if e.gammas.is_empty() {
                c.push("experiment.gammas", "needs at least one rate");
            }
            for (i, &g) in e.gammas.iter().enumerate() {
                c.non_negative(&format!("experiment.gammas[{i}]"), g);
            }
            density_fits(&mut c, sites);
        }
        Experiment::Certify(e) => {
            c.labels("experiment.targets", &e.targets);
            c.grid("experiment.grid", &e.grid);
            c.positive("experiment.threshold", e.threshold);
            c.non_negative("experiment.margin", e.margin);
            if !(e.support_floor >= 0.0 && e.support_floor < 1.0) {
                c.push("experiment.support_floor", format!("must lie in [0, 1), got {}", e.support_floor));
            }
            if e.shots == 0 {
                c.push("experiment.shots", "must be at least 1");
            }
            if e.trials == 0 {
                c.push("experiment.trials", "must be at least 1");
            }
            if let Some(g) = e.gamma {
                c.non_negative("experiment.gamma", g);
                c.ramp("experiment.truth_ramp", &e.truth_ramp);
                if e.truth_ramp.eps_max <= 0.0 {
                    c.push("experiment.truth_ramp.eps_max", "must be positive to set a ramp rate");
                }
                c.integrator("experiment.integrator", &e.integrator);
                if g > 0.0 {
                    density_fits(&mut c, e.block_size.unwrap_or(sites));
                }
            }
            if let Some(b) = e.block_size {
                if config.geometry.kind != GeometryName::Chain {
                    c.push("experiment.block_size", "blocks are only defined for chains");
                } else if b < 2 || b % 2 != 0 || sites % b != 0 {
                    c.push("experiment.block_size", format!("must be even and divide {sites}, got {b}"));
                }
            }
        }
    }
    if c.0.is_empty() {
        Ok(())
    } else {
        Err(c.0)
    }
}

fn density_fits(c: &mut Collector, sites: usize) {
    if sites % 2 == 0 && (2..=MAX_SITES).contains(&sites) {
        let dim = BasisSector::half_filled(sites).map(|s| s.dim()).unwrap_or(usize::MAX);
        if dim > MAX_DENSITY_DIM {
            c.push("geometry.sites", format!("density matrices of dimension {dim} exceed the limit {MAX_DENSITY_DIM}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(grid: &str) -> String {
        format!("[geometry]\nkind = \"chain\"\nsites = 4\n[experiment]\nkind = \"sweep\"\ngrid = {grid}\n")
    }

    #[test]
    fn defaults_fill_in_and_validate() {
        let c = ExperimentConfig::from_toml(&sweep("{ start = 0.0, stop = 70.0, step = 0.5 }")).unwrap();
        assert_eq!(c.params, ParamsSpec::default());
        assert_eq!(c.output_dir, PathBuf::from("out"));
        validate_config(&c).unwrap();
        match &c.experiment {
            Experiment::Sweep(s) => assert_eq!(s.grid.values().len(), 141),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::from_toml(&sweep("{ points = [0.0, 35.0, 70.0] }")).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn errors_name_their_fields() {
        let mut c = ExperimentConfig::from_toml(&sweep("{ start = 5.0, stop = 1.0, step = 1.0 }")).unwrap();
        c.params.u = -1.0;
        c.geometry = GeometrySpec { kind: GeometryName::Ladder, sites: 7 };
        let errs = validate_config(&c).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["geometry.sites", "params.U", "experiment.grid"]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = sweep("{ points = [0.0] }") + "typo = 1\n";
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = sweep("{ points = [0.0] }").replace("grid =", "gird = 1\ngrid =");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn dephasing_needs_a_small_sector() {
        let text = "[geometry]\nkind = \"chain\"\nsites = 8\n[experiment]\nkind = \"lindblad\"\nstates = [\"S1\"]\ngammas = [0.01]\nramp = { t_max = 100.0, eps_max = 70.0 }\n";
        let errs = validate_config(&ExperimentConfig::from_toml(text).unwrap()).unwrap_err();
        assert_eq!(errs[0].field, "geometry.sites");
    }
}
