//! Request and response bodies.

use std::collections::BTreeMap;

use egal_core::engine::{
    ClassReport, ClassStatus, Event, Phase, QueryTicket, Session, Termination,
};
use egal_core::sampling::EstimateKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    /// Partial run configuration; omitted fields take their defaults.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub dataset: String,
    pub created_at_ms: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub spent: usize,
    pub total: usize,
}

impl Budget {
    pub fn of(session: &Session) -> Self {
        Self {
            spent: session.spent(),
            total: session.budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub class_id: String,
    pub exemplar_text: Option<String>,
    pub p_hat: f64,
    pub sigma: f64,
    pub status: ClassStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextQuery {
    pub ticket_id: u64,
    pub example_id: String,
    pub text: Option<String>,
    /// `exemplar_search`, `uncertainty` or `uniform`.
    pub mode: String,
    /// Class being searched for, in `exemplar_search` mode.
    pub search_class: Option<String>,
    pub candidates: Vec<Candidate>,
    pub budget: Budget,
    /// Events from draws of already-labeled examples, which the server
    /// answers itself before issuing this ticket.
    pub events: Vec<Event>,
}

impl NextQuery {
    pub fn build(session: &Session, ticket: &QueryTicket, events: Vec<Event>) -> Self {
        let data = session.dataset();
        let candidates = session
            .class_reports()
            .into_iter()
            .map(|r| Candidate {
                exemplar_text: data.exemplar(&r.class_id).and_then(|e| e.text.clone()),
                class_id: r.class_id,
                p_hat: r.p_hat,
                sigma: r.sigma,
                status: r.status,
            })
            .collect();
        let search_class = match &ticket.mode {
            egal_core::QueryMode::ExemplarSearch { class_id } => Some(class_id.clone()),
            _ => None,
        };
        Self {
            ticket_id: ticket.ticket_id,
            example_id: ticket.example_id.clone(),
            text: data.examples[ticket.example_index].text.clone(),
            mode: ticket.mode.name().to_string(),
            search_class,
            candidates,
            budget: Budget::of(session),
            events,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitLabel {
    pub ticket_id: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub events: Vec<Event>,
    pub budget: Budget,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub draws: usize,
    pub free_lookups: usize,
    pub classes_found: usize,
    pub classes_ruled_out: usize,
    pub unknown_classes: usize,
    /// Labeled examples per class.
    pub labeled: BTreeMap<String, usize>,
    pub model_classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub dataset: String,
    pub phase: Phase,
    pub termination: Option<Termination>,
    pub gamma: f64,
    pub delta: f64,
    pub estimator: EstimateKind,
    pub budget: Budget,
    pub classes: Vec<ClassReport>,
    pub metrics: StateMetrics,
}

impl SessionState {
    pub fn build(handle: &SessionHandle, session: &Session) -> Self {
        let classes = session.class_reports();
        let metrics = StateMetrics {
            draws: session.draws(),
            free_lookups: session.draws() - session.spent() - usize::from(session.outstanding().is_some()),
            classes_found: classes.iter().filter(|c| c.t_y > 0).count(),
            classes_ruled_out: classes
                .iter()
                .filter(|c| c.status == ClassStatus::RuledOut)
                .count(),
            unknown_classes: classes.iter().filter(|c| !c.known).count(),
            labeled: classes.iter().map(|c| (c.class_id.clone(), c.labeled)).collect(),
            model_classes: session
                .model()
                .map(|m| m.class_ids.clone())
                .unwrap_or_default(),
        };
        Self {
            session_id: handle.session_id.clone(),
            dataset: handle.dataset.clone(),
            phase: session.phase(),
            termination: session.termination(),
            gamma: session.config().gamma,
            delta: session.config().delta,
            estimator: session.decision_estimate(),
            budget: Budget::of(session),
            classes,
            metrics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<String>,
    /// Events produced while the request was handled, if any.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub events: Vec<Event>,
}
