//! Experiment configuration, read from TOML. Every field has a default, so a
//! minimal file names only the sweep and the designs.

use std::path::Path;

use d2d_cache::objectives::MetricConstants;
use d2d_cache::preference::GeneratorParams;
use d2d_cache::simulator::ScenarioParams;
use d2d_cache::Design;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    ActiveUsers,
    ClusterSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Inactive users per cluster in an active-user sweep.
    #[serde(default)]
    pub inactive_users: usize,
    /// Set the D2D power by the cluster-size power-control law in a
    /// cluster-size sweep.
    #[serde(default = "yes")]
    pub power_control: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceConfig {
    /// Users in the pool that cluster members are drawn from.
    pub pool_size: usize,
    pub n_files: usize,
    pub zipf_exponent: f64,
    pub mixing_weight: f64,
    pub rank_permutation_strength: f64,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        let g = GeneratorParams::default();
        Self {
            pool_size: 2000,
            n_files: 1000,
            zipf_exponent: g.zipf_exponent,
            mixing_weight: g.mixing_weight,
            rank_permutation_strength: g.rank_permutation_strength,
        }
    }
}

impl PreferenceConfig {
    pub fn generator(&self, seed: u64) -> GeneratorParams {
        GeneratorParams {
            zipf_exponent: self.zipf_exponent,
            mixing_weight: self.mixing_weight,
            rank_permutation_strength: self.rank_permutation_strength,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the preference pool and every realization; overrides
    /// `scenario.seed`.
    pub seed: u64,
    pub scenario: ScenarioParams,
    pub preferences: PreferenceConfig,
    pub cache_size: usize,
    pub designs: Vec<String>,
    pub sweep: Option<SweepConfig>,
    /// Run the Monte Carlo simulator in addition to the closed forms.
    pub simulate: bool,
    /// Overrides the constants derived from the radio parameters.
    pub metrics: Option<MetricConstants>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario: ScenarioParams::default(),
            preferences: PreferenceConfig::default(),
            cache_size: 10,
            designs: vec!["proposed:throughput".into(), "selfish".into()],
            sweep: None,
            simulate: true,
            metrics: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(vec![format!("cannot read {}: {e}", path.display())])
        })?;
        Self::from_toml_str(&text)
    }

    pub fn parsed_designs(&self) -> Result<Vec<Design>, HarnessError> {
        let mut out = Vec::new();
        let mut problems = Vec::new();
        for d in &self.designs {
            match d.parse::<Design>() {
                Ok(x) => out.push(x),
                Err(e) => problems.push(format!("design '{d}': {e}")),
            }
        }
        if problems.is_empty() {
            Ok(out)
        } else {
            Err(HarnessError::Config(problems))
        }
    }

    pub fn metric_constants(&self, radio: &d2d_cache::RadioParams) -> MetricConstants {
        self.metrics
            .unwrap_or_else(|| MetricConstants::from_radio(radio))
    }

    /// Checks everything up front and reports every problem at once.
    /// `needs` names the sweep variable the subcommand requires, if any.
    pub fn validate(&self, needs: Option<SweepVariable>) -> Result<(), HarnessError> {
        let mut problems = Vec::new();
        if self.designs.is_empty() {
            problems.push("designs: at least one design is required".to_string());
        }
        if let Err(HarnessError::Config(p)) = self.parsed_designs() {
            problems.extend(p);
        }
        if let Err(e) = self.scenario.validate() {
            problems.push(format!("scenario: {e}"));
        }
        if let Err(e) = self.preferences.generator(self.seed).validate() {
            problems.push(format!("preferences: {e}"));
        }
        let p = &self.preferences;
        if p.n_files < 2 {
            problems.push(format!(
                "preferences.n_files must be at least 2, got {}",
                p.n_files
            ));
        }
        if p.pool_size == 0 {
            problems.push("preferences.pool_size must be at least 1".into());
        }
        if self.cache_size == 0 || self.cache_size >= p.n_files {
            problems.push(format!(
                "cache_size must be in 1..{} (below the library size), got {}",
                p.n_files, self.cache_size
            ));
        }
        if let Some(mc) = &self.metrics {
            if let Err(e) = mc.validate() {
                problems.push(format!("metrics: {e}"));
            }
        }
        if let Some((a, i)) = self.scenario.fixed_counts {
            if a + i > p.pool_size {
                problems.push(format!(
                    "scenario.fixed_counts needs {} pool users but pool_size is {}",
                    a + i,
                    p.pool_size
                ));
            }
        }
        match (&self.sweep, needs) {
            (None, Some(v)) => problems.push(format!(
                "sweep: this subcommand needs a {} sweep",
                variable_name(v)
            )),
            (Some(s), _) => {
                if let Some(v) = needs {
                    if s.variable != v {
                        problems.push(format!(
                            "sweep.variable is {} but this subcommand sweeps {}",
                            variable_name(s.variable),
                            variable_name(v)
                        ));
                    }
                }
                if s.variable == SweepVariable::ClusterSize && !(self.scenario.lambda_active > 0.0)
                {
                    problems.push(
                        "scenario.lambda_active must be positive for a cluster_size sweep".into(),
                    );
                }
                if s.values.is_empty() {
                    problems.push("sweep.values must not be empty".into());
                }
                for v in &s.values {
                    match s.variable {
                        SweepVariable::ActiveUsers => {
                            if !(*v >= 0.0 && v.fract() == 0.0) {
                                problems.push(format!("sweep value {v} is not a user count"));
                            } else if *v as usize + s.inactive_users > p.pool_size {
                                problems.push(format!(
                                    "sweep value {v} plus inactive users exceeds pool_size {}",
                                    p.pool_size
                                ));
                            }
                        }
                        SweepVariable::ClusterSize => {
                            if !(*v > 0.0 && v.is_finite()) {
                                problems.push(format!(
                                    "sweep value {v} is not a positive cluster side"
                                ));
                            }
                        }
                    }
                }
            }
            (None, None) => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(problems))
        }
    }
}

pub fn variable_name(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::ActiveUsers => "active_users",
        SweepVariable::ClusterSize => "cluster_size",
    }
}
