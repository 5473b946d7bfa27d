use serde::{Deserialize, Serialize};

use crate::bounds::Interval;
use crate::sampling::{EstimateKind, FrequencyEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassStatus {
    /// Known class with no observation yet.
    Searching,
    Found,
    RuledOut,
    /// A label outside the known class list, observed at least once.
    UnknownDiscovered,
}

impl ClassStatus {
    pub fn observed(self) -> bool {
        matches!(self, Self::Found | Self::UnknownDiscovered)
    }
}

/// Per-class bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLifecycle {
    pub class_id: String,
    /// Has an exemplar.
    pub known: bool,
    pub status: ClassStatus,
    /// Number of draws that returned this class, free lookups included.
    pub observations: u64,
    /// Exemplar-search draws issued for this class.
    pub search_draws: u64,
    pub importance: FrequencyEstimate,
    pub uniform: FrequencyEstimate,
    /// Search temperature, for importance-weighted search.
    pub lambda: Option<f64>,
    /// Mean batch ESS per candidate temperature.
    #[serde(default)]
    pub length_scale_curve: Vec<(f64, f64)>,
}

impl ClassLifecycle {
    pub fn estimate(&self, kind: EstimateKind) -> &FrequencyEstimate {
        match kind {
            EstimateKind::Importance => &self.importance,
            EstimateKind::Uniform => &self.uniform,
        }
    }

    pub fn interval(&self, kind: EstimateKind) -> Interval {
        self.estimate(kind).interval()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Search,
    ActiveLearning,
    Exhausted,
}

/// Why a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    AllClassesRuledOut,
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryMode {
    ExemplarSearch { class_id: String },
    Uncertainty,
    Uniform,
    /// Example chosen by the caller rather than the engine.
    Directed,
}

impl QueryMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ExemplarSearch { .. } => "exemplar_search",
            Self::Uncertainty => "uncertainty",
            Self::Uniform => "uniform",
            Self::Directed => "directed",
        }
    }
}

/// One outstanding request for a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTicket {
    pub ticket_id: u64,
    pub example_index: usize,
    pub example_id: String,
    pub mode: QueryMode,
    /// Probability with which this example was selected.
    pub prob_at_draw: f64,
    /// Drawn by a uniform step.
    pub uniform_step: bool,
    /// `prob_at_draw` is a valid propensity for importance weighting.
    pub importance: bool,
    /// Already labeled; answering costs no budget.
    pub free_lookup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ClassFound { class_id: String },
    ClassRuledOut { class_id: String, p_hat: f64, sigma: f64 },
    UnknownClassDiscovered { class_id: String },
    BatchComplete { spent: usize, classes: usize },
    BudgetExhausted { spent: usize },
    AllClassesRuledOut { spent: usize },
    PoolExhausted { spent: usize },
}

/// Per-batch search allowances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchState {
    pub index: usize,
    pub spent: usize,
    /// Labels each searching class may consume in this batch.
    pub allowance: usize,
    pub used: std::collections::BTreeMap<String, usize>,
}

/// Read-only view of one class, as reported to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: String,
    pub known: bool,
    pub status: ClassStatus,
    pub t_y: u64,
    pub labeled: usize,
    pub p_hat: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub estimator: EstimateKind,
}

/// One submitted label in a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep<M> {
    pub draw: usize,
    pub spent: usize,
    pub example_id: String,
    pub events: Vec<Event>,
    /// Filled after every retrain.
    pub metrics: Option<M>,
}
