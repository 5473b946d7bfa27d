use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TrainConfig;
use crate::sampling::EstimateKind;

/// How queries are chosen.
///
/// The first three are the exemplar-guided variants; `Random` and
/// `Uncertainty` are the usual baselines and never search or rule out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Importance-weighted exemplar search, Boltzmann uncertainty sampling.
    IwBoltzmann,
    /// Importance-weighted exemplar search, ε-greedy uncertainty sampling.
    Hybrid,
    /// ε-greedy for both search and active learning.
    EpsilonGreedy,
    Random,
    Uncertainty,
}

impl Strategy {
    pub fn searches(self) -> bool {
        matches!(self, Self::IwBoltzmann | Self::Hybrid | Self::EpsilonGreedy)
    }

    pub fn importance_search(self) -> bool {
        matches!(self, Self::IwBoltzmann | Self::Hybrid)
    }

    /// Whether classes are ruled out by the stopping rule.
    pub fn uses_stopping_rule(self) -> bool {
        self.searches()
    }

    /// Estimator whose bound drives rule-out decisions in the given phase.
    pub fn decision_estimate(self, searching: bool) -> EstimateKind {
        match self {
            Self::IwBoltzmann => EstimateKind::Importance,
            Self::Hybrid if searching => EstimateKind::Importance,
            _ => EstimateKind::Uniform,
        }
    }
}

/// Uncertainty score used in the active-learning phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlScore {
    Entropy,
    LeastConfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Frequency threshold below which a class may be ignored.
    pub gamma: f64,
    pub delta: f64,
    /// Maximum number of distinct labeled examples.
    pub budget: usize,
    /// Labels between classifier retrains.
    pub batch_size: usize,
    pub strategy: Strategy,
    pub epsilon: f64,
    /// Minimum sampling probability. `None` uses `0.1 / n`.
    pub alpha_floor: Option<f64>,
    pub al_score: AlScore,
    /// Temperature of the Boltzmann active-learning distribution.
    pub al_lambda: f64,
    /// Force uniform active-learning steps until enough uniform draws without
    /// an unknown class have been collected.
    pub unknown_class_guarantee: bool,
    pub seed: u64,
    pub train: TrainConfig,
    pub length_scale_grid: usize,
    pub length_scale_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            delta: 0.05,
            budget: 300,
            batch_size: 20,
            strategy: Strategy::Hybrid,
            epsilon: 0.1,
            alpha_floor: None,
            al_score: AlScore::Entropy,
            al_lambda: 0.1,
            unknown_class_guarantee: false,
            seed: 0,
            train: TrainConfig::default(),
            length_scale_grid: 16,
            length_scale_runs: 32,
        }
    }
}

/// A rejected configuration value.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Default propensity floor for a pool of `n`.
    pub fn default_alpha(n: usize) -> f64 {
        0.1 / n.max(1) as f64
    }

    pub fn resolved_alpha(&self, n: usize) -> f64 {
        self.alpha_floor.unwrap_or_else(|| Self::default_alpha(n))
    }

    /// Checks every field against its domain. `n` is the pool size.
    pub fn validate(&self, n: usize) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(bad("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be positive"));
        }
        if self.budget > 0 && self.batch_size > self.budget {
            return Err(bad(
                "batch_size",
                format!("{} exceeds budget {}", self.batch_size, self.budget),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(bad("epsilon", format!("must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.al_lambda > 0.0 && self.al_lambda.is_finite()) {
            return Err(bad("al_lambda", format!("must be positive, got {}", self.al_lambda)));
        }
        let alpha = self.resolved_alpha(n);
        if !(0.0..1.0).contains(&alpha) {
            return Err(bad("alpha_floor", format!("must lie in [0, 1), got {alpha}")));
        }
        if alpha * n as f64 > 1.0 + 1e-12 {
            return Err(bad(
                "alpha_floor",
                format!("{alpha} times pool size {n} exceeds 1"),
            ));
        }
        if self.strategy.importance_search() && alpha <= 0.0 {
            return Err(bad(
                "alpha_floor",
                "importance-weighted strategies need a positive floor to bound the weights",
            ));
        }
        if !(self.train.reg_strength > 0.0) {
            return Err(bad("train.reg_strength", "must be positive"));
        }
        if self.length_scale_grid == 0 || self.length_scale_runs == 0 {
            return Err(bad("length_scale_grid", "grid size and run count must be positive"));
        }
        Ok(())
    }
}
