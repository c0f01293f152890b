//! Certification plans as structured text.

use serde::{Deserialize, Serialize};
use tiltcert_core::certify::{CertificationPlan, Classification};

/// Serializable view of a [`CertificationPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub targets: Vec<String>,
    pub tilts: Vec<f64>,
    pub threshold: f64,
    pub margin: f64,
    pub support_floor: f64,
    /// Independent copies of the plan along the chain.
    pub blocks: usize,
    pub expected: Vec<ExpectedEntry>,
    pub rules: Vec<RuleEntry>,
}

/// Expected outcome distribution of one target at one tilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedEntry {
    pub state: String,
    pub tilt: f64,
    pub dominant: String,
    pub configs: Vec<String>,
    pub probabilities: Vec<f64>,
}

/// `outcomes → label`; `"*"` marks an outcome that is not consulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub outcomes: Vec<String>,
    pub label: String,
}

impl PlanDocument {
    /// Configurations with probability at or below `1e-12` are left out.
    pub fn from_plan(plan: &CertificationPlan, blocks: usize) -> Self {
        let mut expected = Vec::new();
        for (t, label) in plan.targets.iter().enumerate() {
            for (i, &tilt) in plan.tilts.iter().enumerate() {
                let d = &plan.expected[i][t];
                let (configs, probabilities) =
                    d.iter().filter(|&(_, p)| p > 1e-12).map(|(c, p)| (c.to_string(), p)).unzip();
                expected.push(ExpectedEntry {
                    state: label.to_string(),
                    tilt,
                    dominant: d.dominant().0.to_string(),
                    configs,
                    probabilities,
                });
            }
        }
        let rules = plan
            .rules()
            .into_iter()
            .filter(|r| matches!(r.verdict, Classification::Label(_) | Classification::Ambiguous))
            .map(|r| RuleEntry {
                outcomes: r.outcomes.iter().map(|o| o.as_ref().map_or("*".to_string(), |c| c.to_string())).collect(),
                label: r.verdict.to_string(),
            })
            .collect();
        PlanDocument {
            targets: plan.targets.iter().map(|l| l.to_string()).collect(),
            tilts: plan.tilts.clone(),
            threshold: plan.options.threshold,
            margin: plan.options.margin,
            support_floor: plan.options.support_floor,
            blocks,
            expected,
            rules,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
