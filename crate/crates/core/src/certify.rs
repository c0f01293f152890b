//! Certification planning: pick tilts whose charge outcomes tell the target
//! eigenstates apart, classify measured outcome sequences and estimate the
//! error of repeated shots.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use thiserror::Error;

use crate::linalg::seeded_rng;
use crate::model::{build_charge_projectors, ChargeConfig, ChargeProjector};
use crate::opensys::{kl_distance, state_distribution, ChargeDistribution, OpenSystemError};
use crate::spectral::{SpectralError, SpectrumSolver, StateLabel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("no tilt set on the grid separates {}", format_pairs(.pairs))]
    Unresolved { pairs: Vec<(StateLabel, StateLabel)>, tilts: Vec<f64> },
    #[error("plan has {expected} tilts but {got} outcomes were given")]
    OutcomeCount { expected: usize, got: usize },
    #[error("target {0} is not in the expectation table")]
    UnknownTarget(StateLabel),
    #[error("need at least one target")]
    NoTargets,
    #[error("candidate grid is empty")]
    EmptyGrid,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("shots per tilt must be at least 1")]
    NoShots,
    #[error("expected {expected} distributions per state, got {got}")]
    TruthShape { expected: usize, got: usize },
    #[error("hyperfine mixing needs a positive gap, got {0}")]
    NonPositiveGap(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    OpenSystem(#[from] OpenSystemError),
}

fn format_pairs(pairs: &[(StateLabel, StateLabel)]) -> alloc::string::String {
    use core::fmt::Write;
    let mut s = alloc::string::String::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{a}/{b}");
    }
    s
}

/// How an eigenstate's charge distribution becomes an expected outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMode {
    /// The full configuration distribution of the eigenvector.
    Exact,
    /// All weight on the eigenvector's most likely configuration.
    Dominant,
}

/// Expected outcome distributions per target and candidate tilt.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationTable {
    pub targets: Vec<StateLabel>,
    pub eps: Vec<f64>,
    /// `dists[t][j]` for target `t` at tilt `eps[j]`.
    dists: Vec<Vec<ChargeDistribution>>,
}

impl ExpectationTable {
    /// Solves the eigenstates on `grid` and converts them with `mode`.
    pub fn from_solver(
        solver: &SpectrumSolver,
        targets: &[StateLabel],
        grid: &[f64],
        mode: ExpectationMode,
    ) -> Result<Self, CertifyError> {
        if targets.is_empty() {
            return Err(CertifyError::NoTargets);
        }
        if grid.is_empty() {
            return Err(CertifyError::EmptyGrid);
        }
        let projectors = build_charge_projectors(solver.sector());
        let mut dists = vec![Vec::with_capacity(grid.len()); targets.len()];
        let mut guesses: Vec<Vec<f64>> = Vec::new();
        for &eps in grid {
            let records = solver.solve_requiring(eps, &guesses, targets)?;
            for (t, &label) in targets.iter().enumerate() {
                let r = records.iter().find(|r| r.label() == label).ok_or(SpectralError::MissingState {
                    label,
                    eps,
                    available: records.len(),
                })?;
                let exact = state_distribution(&r.vector, &projectors);
                dists[t].push(match mode {
                    ExpectationMode::Exact => exact,
                    ExpectationMode::Dominant => dominant_only(&projectors, &exact),
                });
            }
            guesses = records.into_iter().map(|r| r.vector).collect();
        }
        Ok(ExpectationTable { targets: targets.to_vec(), eps: grid.to_vec(), dists })
    }

    /// Builds a table from explicit distributions, `dists[t][j]`.
    pub fn from_parts(
        targets: Vec<StateLabel>,
        eps: Vec<f64>,
        dists: Vec<Vec<ChargeDistribution>>,
    ) -> Result<Self, CertifyError> {
        if targets.is_empty() {
            return Err(CertifyError::NoTargets);
        }
        if eps.is_empty() {
            return Err(CertifyError::EmptyGrid);
        }
        for d in &dists {
            if d.len() != eps.len() {
                return Err(CertifyError::TruthShape { expected: eps.len(), got: d.len() });
            }
        }
        if dists.len() != targets.len() {
            return Err(CertifyError::TruthShape { expected: targets.len(), got: dists.len() });
        }
        Ok(ExpectationTable { targets, eps, dists })
    }

    pub fn get(&self, target: usize, eps_index: usize) -> &ChargeDistribution {
        &self.dists[target][eps_index]
    }

    /// Replaces one expected distribution, for instance with a time-averaged
    /// trajectory distribution for a state that does not evolve adiabatically.
    pub fn set(&mut self, label: StateLabel, eps_index: usize, dist: ChargeDistribution) -> Result<(), CertifyError> {
        let t = self.index_of(label)?;
        self.dists[t][eps_index] = dist;
        Ok(())
    }

    pub fn index_of(&self, label: StateLabel) -> Result<usize, CertifyError> {
        self.targets.iter().position(|&l| l == label).ok_or(CertifyError::UnknownTarget(label))
    }

    /// Restricts the table to a subset of its targets.
    pub fn subset(&self, labels: &[StateLabel]) -> Result<Self, CertifyError> {
        let idx: Vec<usize> = labels.iter().map(|&l| self.index_of(l)).collect::<Result<_, _>>()?;
        Ok(ExpectationTable {
            targets: labels.to_vec(),
            eps: self.eps.clone(),
            dists: idx.into_iter().map(|i| self.dists[i].clone()).collect(),
        })
    }

    /// `min(d(p,q), d(q,p))` between two targets at grid point `j`.
    pub fn separation(&self, a: usize, b: usize, j: usize) -> Result<f64, CertifyError> {
        let (p, q) = (&self.dists[a][j], &self.dists[b][j]);
        Ok(kl_distance(p, q)?.min(kl_distance(q, p)?))
    }
}

fn dominant_only(projectors: &[ChargeProjector], dist: &ChargeDistribution) -> ChargeDistribution {
    let (config, _) = dist.dominant();
    ChargeDistribution::definite(projectors, config).expect("dominant configuration comes from the projectors")
}

/// Planner controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Minimum KL distance (bits) for two states to count as separated.
    pub threshold: f64,
    /// A pair is separated at `ε` only if it stays separated at every grid
    /// tilt within `±margin`, so plans tolerate tilt miscalibration.
    pub margin: f64,
    /// Configurations with expected probability at or below this count as
    /// outside a state's support when building the decision tree. The
    /// majority outcome of several shots almost never lands on them.
    pub support_floor: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { threshold: 1.0, margin: 5.0, support_floor: 0.05 }
    }
}

/// Final answer for an outcome sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Label(StateLabel),
    /// Several targets remain consistent with the outcomes.
    Ambiguous,
    /// An outcome lies outside every expected support: the model does not
    /// describe the device.
    Unrecognized,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Label(l) => write!(f, "{l}"),
            Classification::Ambiguous => f.write_str("ambiguous"),
            Classification::Unrecognized => f.write_str("unrecognized"),
        }
    }
}

/// Decision tree over outcome sequences, one level per tilt.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionNode {
    Leaf(Classification),
    Branch { tilt: usize, children: Vec<(ChargeConfig, DecisionNode)> },
}

/// One `outcomes → label` rule of a flattened decision tree; `None` marks a
/// tilt whose outcome is not consulted.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRule {
    pub outcomes: Vec<Option<ChargeConfig>>,
    pub verdict: Classification,
}

/// Tilts, expected distributions and decision tree for a set of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationPlan {
    pub targets: Vec<StateLabel>,
    /// Ascending tilts, in units of `t`.
    pub tilts: Vec<f64>,
    /// `expected[i][t]`: distribution of target `t` at tilt `i`.
    pub expected: Vec<Vec<ChargeDistribution>>,
    pub tree: DecisionNode,
    pub options: PlanOptions,
}

impl CertificationPlan {
    /// Builds the plan for the given grid indices of `table`.
    pub fn for_tilts(table: &ExpectationTable, indices: &[usize], options: PlanOptions) -> Self {
        let mut indices = indices.to_vec();
        indices.sort_by(|&a, &b| table.eps[a].total_cmp(&table.eps[b]));
        indices.dedup();
        let expected: Vec<Vec<ChargeDistribution>> = indices
            .iter()
            .map(|&j| (0..table.targets.len()).map(|t| table.get(t, j).clone()).collect())
            .collect();
        let all: Vec<usize> = (0..table.targets.len()).collect();
        let tree = build_tree(&table.targets, &expected, options.support_floor, 0, &all);
        CertificationPlan {
            targets: table.targets.clone(),
            tilts: indices.iter().map(|&j| table.eps[j]).collect(),
            expected,
            tree,
            options,
        }
    }

    /// Flattened rules, in tree order.
    pub fn rules(&self) -> Vec<DecisionRule> {
        let mut out = Vec::new();
        let mut prefix = vec![None; self.tilts.len()];
        flatten(&self.tree, &mut prefix, &mut out);
        out
    }

    /// Most likely configuration of each target at each tilt.
    pub fn expected_outcomes(&self, target: usize) -> Vec<ChargeConfig> {
        self.expected.iter().map(|row| row[target].dominant().0.clone()).collect()
    }
}

fn flatten(node: &DecisionNode, prefix: &mut Vec<Option<ChargeConfig>>, out: &mut Vec<DecisionRule>) {
    match node {
        DecisionNode::Leaf(v) => out.push(DecisionRule { outcomes: prefix.clone(), verdict: *v }),
        DecisionNode::Branch { tilt, children } => {
            for (config, child) in children {
                prefix[*tilt] = Some(config.clone());
                flatten(child, prefix, out);
            }
            prefix[*tilt] = None;
        }
    }
}

fn build_tree(
    targets: &[StateLabel],
    expected: &[Vec<ChargeDistribution>],
    floor: f64,
    level: usize,
    candidates: &[usize],
) -> DecisionNode {
    if candidates.len() == 1 {
        return DecisionNode::Leaf(Classification::Label(targets[candidates[0]]));
    }
    if level == expected.len() {
        return DecisionNode::Leaf(Classification::Ambiguous);
    }
    let mut configs: BTreeSet<ChargeConfig> = BTreeSet::new();
    for &c in candidates {
        for (config, _) in expected[level][c].support(floor) {
            configs.insert(config.clone());
        }
    }
    let children = configs
        .into_iter()
        .map(|config| {
            let next: Vec<usize> =
                candidates.iter().copied().filter(|&c| expected[level][c].probability(&config) > floor).collect();
            let child = build_tree(targets, expected, floor, level + 1, &next);
            (config, child)
        })
        .collect();
    DecisionNode::Branch { tilt: level, children }
}

/// Greedy tilt selection: repeatedly add the candidate tilt that separates
/// the most unresolved pairs, preferring the smaller tilt on ties.
pub fn plan_tilts(table: &ExpectationTable, options: &PlanOptions) -> Result<CertificationPlan, CertifyError> {
    if !(options.threshold > 0.0) {
        return Err(CertifyError::InvalidThreshold(options.threshold));
    }
    let sep = robust_separation(table, options)?;
    let n = table.targets.len();
    let mut unresolved: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut chosen: Vec<usize> = Vec::new();
    while !unresolved.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for j in 0..table.eps.len() {
            let count = unresolved.iter().filter(|&&(a, b)| sep[j][pair_index(n, a, b)]).count();
            let better = match best {
                None => count > 0,
                Some((_, c)) => count > c || (count == c && table.eps[j] < table.eps[best.unwrap().0]),
            };
            if better {
                best = Some((j, count));
            }
        }
        match best {
            Some((j, _)) => {
                chosen.push(j);
                unresolved.retain(|&(a, b)| !sep[j][pair_index(n, a, b)]);
            }
            None => {
                return Err(CertifyError::Unresolved {
                    pairs: unresolved.iter().map(|&(a, b)| (table.targets[a], table.targets[b])).collect(),
                    tilts: chosen.iter().map(|&j| table.eps[j]).collect(),
                })
            }
        }
    }
    Ok(CertificationPlan::for_tilts(table, &chosen, *options))
}

/// Grid tilts at which a single measurement separates every pair.
pub fn single_tilt_solutions(table: &ExpectationTable, options: &PlanOptions) -> Result<Vec<f64>, CertifyError> {
    let sep = robust_separation(table, options)?;
    Ok((0..table.eps.len()).filter(|&j| sep[j].iter().all(|&s| s)).map(|j| table.eps[j]).collect())
}

/// Whether targets `a` and `b` are separated at grid point `j`, including the
/// robustness margin.
pub fn pair_separated(table: &ExpectationTable, options: &PlanOptions, a: usize, b: usize, j: usize) -> Result<bool, CertifyError> {
    let eps = table.eps[j];
    for (i, &e) in table.eps.iter().enumerate() {
        if (e - eps).abs() <= options.margin + 1e-9 && table.separation(a, b, i)? < options.threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

fn pair_index(n: usize, a: usize, b: usize) -> usize {
    a * n + b
}

/// `sep[j][a*n+b]` for `a < b`.
fn robust_separation(table: &ExpectationTable, options: &PlanOptions) -> Result<Vec<Vec<bool>>, CertifyError> {
    let n = table.targets.len();
    let m = table.eps.len();
    let mut raw = vec![vec![false; n * n]; m];
    for (j, row) in raw.iter_mut().enumerate() {
        for a in 0..n {
            for b in a + 1..n {
                row[pair_index(n, a, b)] = table.separation(a, b, j)? >= options.threshold;
            }
        }
    }
    let mut out = vec![vec![false; n * n]; m];
    for j in 0..m {
        let window: Vec<usize> =
            (0..m).filter(|&i| (table.eps[i] - table.eps[j]).abs() <= options.margin + 1e-9).collect();
        for a in 0..n {
            for b in a + 1..n {
                let p = pair_index(n, a, b);
                out[j][p] = window.iter().all(|&i| raw[i][p]);
            }
        }
    }
    Ok(out)
}

/// Walks the decision tree with one observed configuration per tilt.
pub fn classify_outcome(outcomes: &[ChargeConfig], plan: &CertificationPlan) -> Result<Classification, CertifyError> {
    if outcomes.len() != plan.tilts.len() {
        return Err(CertifyError::OutcomeCount { expected: plan.tilts.len(), got: outcomes.len() });
    }
    let mut node = &plan.tree;
    loop {
        match node {
            DecisionNode::Leaf(v) => return Ok(*v),
            DecisionNode::Branch { tilt, children } => {
                let seen = &outcomes[*tilt];
                match children.iter().find(|(c, _)| c == seen) {
                    Some((_, child)) => node = child,
                    None => {
                        let known = plan.expected[*tilt]
                            .iter()
                            .any(|d| d.probability(seen) > plan.options.support_floor);
                        return Ok(if known { Classification::Ambiguous } else { Classification::Unrecognized });
                    }
                }
            }
        }
    }
}

/// Counts of classified labels per true state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<StateLabel>,
    /// `counts[true][classified]`, classified over `labels`.
    pub counts: Vec<Vec<u64>>,
    pub ambiguous: Vec<u64>,
    pub unrecognized: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<StateLabel>) -> Self {
        let n = labels.len();
        ConfusionMatrix { labels, counts: vec![vec![0; n]; n], ambiguous: vec![0; n], unrecognized: vec![0; n] }
    }

    pub fn record(&mut self, truth: usize, result: Classification) {
        match result {
            Classification::Label(l) => match self.labels.iter().position(|&x| x == l) {
                Some(c) => self.counts[truth][c] += 1,
                None => self.unrecognized[truth] += 1,
            },
            Classification::Ambiguous => self.ambiguous[truth] += 1,
            Classification::Unrecognized => self.unrecognized[truth] += 1,
        }
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum::<u64>() + self.ambiguous[truth] + self.unrecognized[truth]
    }

    /// Trials not classified as the true label.
    pub fn errors(&self, truth: usize) -> u64 {
        self.row_total(truth) - self.counts[truth][truth]
    }

    pub fn total_errors(&self) -> u64 {
        (0..self.labels.len()).map(|t| self.errors(t)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.labels.len()).all(|t| self.errors(t) == 0)
    }
}

/// Monte Carlo of the measurement protocol.
///
/// `truth[t][i]` is the actual outcome distribution of target `t` at plan
/// tilt `i`. Each trial draws `shots` outcomes per tilt, keeps the most
/// frequent configuration (ties go to the first in configuration order) and
/// classifies the resulting sequence. Deterministic for a given seed.
pub fn simulate_protocol(
    plan: &CertificationPlan,
    truth: &[Vec<ChargeDistribution>],
    shots: usize,
    trials: usize,
    seed: u64,
) -> Result<ConfusionMatrix, CertifyError> {
    if shots == 0 {
        return Err(CertifyError::NoShots);
    }
    if truth.len() != plan.targets.len() {
        return Err(CertifyError::TruthShape { expected: plan.targets.len(), got: truth.len() });
    }
    for row in truth {
        if row.len() != plan.tilts.len() {
            return Err(CertifyError::TruthShape { expected: plan.tilts.len(), got: row.len() });
        }
    }
    let mut rng = seeded_rng(seed);
    let mut confusion = ConfusionMatrix::new(plan.targets.clone());
    for (t, row) in truth.iter().enumerate() {
        let cumulative: Vec<Vec<f64>> = row
            .iter()
            .map(|d| {
                let mut acc = 0.0;
                d.probabilities()
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        for _ in 0..trials {
            let mut outcomes = Vec::with_capacity(row.len());
            for (d, cum) in row.iter().zip(&cumulative) {
                let mut tally = vec![0u32; cum.len()];
                for _ in 0..shots {
                    let u: f64 = rng.gen::<f64>() * cum[cum.len() - 1];
                    let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                    tally[k] += 1;
                }
                let mut best = 0;
                for k in 1..tally.len() {
                    if tally[k] > tally[best] {
                        best = k;
                    }
                }
                outcomes.push(d.configs()[best].clone());
            }
            confusion.record(t, classify_outcome(&outcomes, plan)?);
        }
    }
    Ok(confusion)
}

/// `2^{−M d}`: error scale after `shots` samples at KL distance `d`.
pub fn misclassification_bound(d: f64, shots: usize) -> f64 {
    libm::exp2(-(shots as f64) * d)
}

/// Spin mixing rate `A²/ΔE` from a hyperfine coupling `A` across the
/// singlet–triplet gap, in the units of the inputs.
pub fn hyperfine_mixing_rate(coupling: f64, gap: f64) -> Result<f64, CertifyError> {
    if !(gap > 0.0) {
        return Err(CertifyError::NonPositiveGap(gap));
    }
    Ok(coupling * coupling / gap)
}
