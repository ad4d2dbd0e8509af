//! Experiment configuration: a JSON document naming a scenario, a problem
//! source, horizons, seeds, a tuning rule and an output directory. Unknown
//! fields are rejected.

use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    BilinearCogda,
    BilinearComida,
    BilinearSgdaContrast,
    AmdpPlan,
}

impl Scenario {
    pub fn is_bilinear(self) -> bool {
        !matches!(self, Scenario::AmdpPlan)
    }
}

/// Where the problem description comes from: a file, an inline document, or
/// the seeded random-MDP generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Path(PathBuf),
    Inline(serde_json::Value),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub s: usize,
    pub a: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualParams {
    pub eta_x: Option<f64>,
    pub eta_y: Option<f64>,
    pub rho_x: Option<f64>,
    pub rho_y: Option<f64>,
    pub eta_v: Option<f64>,
    pub eta_mu: Option<f64>,
    pub rho_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    Theorem1,
    Corollary1,
    Theorem3,
    Manual(ManualParams),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub problem: ProblemSource,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tuning: Tuning,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(HarnessError::Config("horizons must be nonempty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(HarnessError::Config("horizons must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be nonempty".into()));
        }
        match (self.scenario, &self.tuning) {
            (Scenario::BilinearCogda | Scenario::BilinearSgdaContrast, Tuning::Theorem1) => {}
            (Scenario::BilinearComida, Tuning::Corollary1) => {}
            (Scenario::AmdpPlan, Tuning::Theorem3) => {}
            (scenario, Tuning::Manual(params)) => {
                if scenario.is_bilinear() {
                    if params.eta_x.is_none()
                        || params.eta_y.is_none()
                        || params.rho_x.is_none()
                        || params.rho_y.is_none()
                    {
                        return Err(HarnessError::Config(
                            "manual tuning for a bilinear scenario requires eta_x, eta_y, rho_x and rho_y"
                                .into(),
                        ));
                    }
                } else if params.eta_v.is_none() || params.eta_mu.is_none() || params.rho_v.is_none()
                {
                    return Err(HarnessError::Config(
                        "manual tuning for the planner requires eta_v, eta_mu and rho_v".into(),
                    ));
                }
            }
            (scenario, tuning) => {
                return Err(HarnessError::Config(format!(
                    "tuning {tuning:?} does not apply to scenario {scenario:?}"
                )));
            }
        }
        if matches!(self.problem, ProblemSource::Generator(_)) && self.scenario.is_bilinear() {
            return Err(HarnessError::Config(
                "the random-MDP generator only applies to the amdp_plan scenario".into(),
            ));
        }
        Ok(())
    }
}

/// Reads and validates a configuration document; unknown fields are rejected
/// by name.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let doc = fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&doc)
}

pub fn parse_config_str(doc: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        serde_json::from_str(doc).map_err(|e| HarnessError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
