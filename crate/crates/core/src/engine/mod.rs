//! The labeling loop as a pull-style state machine.
//!
//! A [`Session`] alternates [`Session::next_query`] and
//! [`Session::submit_label`]. While any known class is still unobserved the
//! session searches around that class's exemplar; every draw also updates the
//! frequency estimate of every tracked class, and a class whose upper
//! confidence bound drops below `gamma` is ruled out. Once no class is
//! searching, queries come from the uncertainty selector. The classifier is
//! retrained after every `batch_size` charged labels.
//!
//! Budget accounting: only the first label of an example is charged. Draws
//! are with replacement, so an example can be drawn again; such a draw is a
//! free lookup that still feeds the estimators.

mod config;
mod snapshot;
mod types;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

pub use config::{AlScore, ConfigError, RunConfig, Strategy};
pub use snapshot::{DatasetDigest, SessionSnapshot, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};
pub use types::{
    BatchState, ClassLifecycle, ClassReport, ClassStatus, Event, Phase, QueryMode, QueryTicket,
    Termination, TrajectoryStep,
};

use crate::bounds::{self, BoundsError};
use crate::classifier::{self, ClassifierError, ClassifierModel};
use crate::dataset::{Dataset, ExampleRecord};
use crate::rng::{self, EgalRng, Stream};
use crate::sampling::{
    self, EstimateKind, FrequencyEstimate, SamplingDistribution, SamplingError,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset has no examples")]
    EmptyPool,
    #[error("ticket {0} is still outstanding; submit a label before asking for another query")]
    TicketOutstanding(u64),
    #[error("ticket {0} is not the outstanding ticket")]
    StaleTicket(u64),
    #[error("session is exhausted")]
    Exhausted,
    #[error("label must be a nonempty string")]
    EmptyLabel,
    #[error("oracle has no label for example `{0}`")]
    MissingLabel(String),
    #[error("example index {0} is outside the pool")]
    BadIndex(usize),
    #[error("snapshot does not match this dataset: {0}")]
    SnapshotMismatch(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Serializable session state. Everything else in [`Session`] is derived
/// from this and the dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub(crate) struct SessionCore {
    pub config: RunConfig,
    pub alpha: f64,
    pub uniform_stopping_count: u64,
    pub lifecycles: Vec<ClassLifecycle>,
    /// Example id to class id.
    pub labeled: BTreeMap<String, String>,
    pub ledger: sampling::DrawLedger,
    pub spent: usize,
    pub phase: Phase,
    pub termination: Option<Termination>,
    pub model: Option<ClassifierModel>,
    pub uniform_clean_run: u64,
    pub importance_draws: u64,
    pub uniform_draws: u64,
    pub batch: BatchState,
    pub outstanding: Option<QueryTicket>,
    pub next_ticket_id: u64,
    pub rng: EgalRng,
}

/// Derived lookup tables; rebuilt on snapshot load.
#[derive(Debug, Clone, Default)]
struct Caches {
    /// Distances from every pool example to each known class's exemplar,
    /// indexed like `lifecycles`.
    distances: Vec<Vec<f64>>,
    search: Vec<Option<SamplingDistribution>>,
    /// Lifecycle index of each labeled example.
    label_of: Vec<Option<usize>>,
    class_index: HashMap<String, usize>,
    al_scores: Option<Vec<f64>>,
    al_dist: Option<SamplingDistribution>,
}

pub struct Session {
    core: SessionCore,
    dataset: Arc<Dataset>,
    caches: Caches,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("phase", &self.core.phase)
            .field("spent", &self.core.spent)
            .field("classes", &self.core.lifecycles.len())
            .finish()
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    if b == 0 {
        0
    } else {
        a.div_ceil(b)
    }
}

impl Session {
    /// Starts a session with every known class searching. For
    /// importance-weighted strategies each class's search temperature is fitted
    /// here.
    pub fn new(config: RunConfig, dataset: Arc<Dataset>) -> Result<Self> {
        let n = dataset.len();
        if n == 0 {
            return Err(EngineError::EmptyPool);
        }
        config.validate(n)?;
        let alpha = config.resolved_alpha(n);
        let max_weight = if alpha > 0.0 {
            1.0 / (alpha * n as f64)
        } else {
            f64::MAX
        };
        let distances = exemplar_distances(&dataset);
        let mut lifecycles = Vec::with_capacity(dataset.class_ids.len());
        for (k, class_id) in dataset.class_ids.iter().enumerate() {
            let (lambda, curve) = if config.strategy.importance_search() {
                let grid = sampling::search_length_scale_grid(
                    &distances[k],
                    config.length_scale_grid,
                    config.batch_size,
                )?;
                let mut ls_rng = rng::substream(config.seed, Stream::LengthScale, k as u64);
                let fit = sampling::optimize_length_scale(
                    &distances[k],
                    config.batch_size,
                    config.length_scale_runs,
                    &grid,
                    &mut ls_rng,
                )?;
                (Some(fit.lambda), fit.curve)
            } else {
                (None, Vec::new())
            };
            lifecycles.push(ClassLifecycle {
                class_id: class_id.clone(),
                known: true,
                status: ClassStatus::Searching,
                observations: 0,
                search_draws: 0,
                importance: FrequencyEstimate::importance(class_id.clone(), max_weight, config.delta),
                uniform: FrequencyEstimate::uniform(class_id.clone(), config.delta),
                lambda,
                length_scale_curve: curve,
            });
        }
        let phase = if config.budget == 0 {
            Phase::Exhausted
        } else if config.strategy.searches() && !lifecycles.is_empty() {
            Phase::Search
        } else {
            Phase::ActiveLearning
        };
        let core = SessionCore {
            uniform_stopping_count: bounds::uniform_stopping_count(config.gamma, config.delta)?,
            rng: rng::stream(config.seed, Stream::Session),
            config,
            alpha,
            lifecycles,
            labeled: BTreeMap::new(),
            ledger: sampling::DrawLedger::new(n),
            spent: 0,
            phase,
            termination: (phase == Phase::Exhausted).then_some(Termination::BudgetExhausted),
            model: None,
            uniform_clean_run: 0,
            importance_draws: 0,
            uniform_draws: 0,
            batch: BatchState::default(),
            outstanding: None,
            next_ticket_id: 1,
        };
        let mut session = Self {
            core,
            dataset,
            caches: Caches {
                distances,
                ..Default::default()
            },
        };
        session.rebuild_caches()?;
        session.start_batch();
        Ok(session)
    }

    fn rebuild_caches(&mut self) -> Result<()> {
        let n = self.dataset.len();
        self.caches.class_index = self
            .core
            .lifecycles
            .iter()
            .enumerate()
            .map(|(i, lc)| (lc.class_id.clone(), i))
            .collect();
        self.caches.search = Vec::with_capacity(self.caches.distances.len());
        for k in 0..self.caches.distances.len() {
            let dist = match self.core.lifecycles[k].lambda {
                Some(lambda) => Some(sampling::boltzmann_distribution(
                    &self.caches.distances[k],
                    lambda,
                    self.core.alpha,
                )?),
                None => None,
            };
            self.caches.search.push(dist);
        }
        let ids = crate::dataset::id_index(&self.dataset.examples);
        self.caches.label_of = vec![None; n];
        for (id, class) in &self.core.labeled {
            let i = *ids
                .get(id.as_str())
                .ok_or_else(|| EngineError::SnapshotMismatch(format!("unknown example id `{id}`")))?;
            let c = *self
                .caches
                .class_index
                .get(class)
                .ok_or_else(|| EngineError::SnapshotMismatch(format!("unknown class `{class}`")))?;
            self.caches.label_of[i] = Some(c);
        }
        self.refresh_al_cache()?;
        Ok(())
    }

    fn refresh_al_cache(&mut self) -> Result<()> {
        self.caches.al_scores = None;
        self.caches.al_dist = None;
        let Some(model) = &self.core.model else {
            return Ok(());
        };
        let score = match self.core.config.al_score {
            AlScore::Entropy => classifier::entropy_score,
            AlScore::LeastConfidence => classifier::least_confidence_score,
        };
        let scores = self
            .dataset
            .examples
            .iter()
            .map(|r| model.predict_proba(&r.vec).map(|p| score(&p)))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        if self.core.config.strategy == Strategy::IwBoltzmann {
            self.caches.al_dist = Some(sampling::score_distribution(
                &scores,
                self.core.config.al_lambda,
                self.core.alpha,
            )?);
        }
        self.caches.al_scores = Some(scores);
        Ok(())
    }

    fn start_batch(&mut self) {
        let searching = if self.core.config.strategy.searches() {
            self.core
                .lifecycles
                .iter()
                .filter(|lc| lc.known && lc.status == ClassStatus::Searching)
                .count()
        } else {
            0
        };
        let index = self.core.batch.index + usize::from(self.core.spent > 0);
        self.core.batch = BatchState {
            index,
            spent: 0,
            allowance: ceil_div(self.core.config.batch_size, searching),
            used: BTreeMap::new(),
        };
    }

    pub fn config(&self) -> &RunConfig {
        &self.core.config
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn phase(&self) -> Phase {
        self.core.phase
    }

    pub fn termination(&self) -> Option<Termination> {
        self.core.termination
    }

    pub fn spent(&self) -> usize {
        self.core.spent
    }

    pub fn budget(&self) -> usize {
        self.core.config.budget
    }

    pub fn alpha(&self) -> f64 {
        self.core.alpha
    }

    pub fn draws(&self) -> usize {
        self.core.ledger.len()
    }

    pub fn ledger(&self) -> &sampling::DrawLedger {
        &self.core.ledger
    }

    pub fn lifecycles(&self) -> &[ClassLifecycle] {
        &self.core.lifecycles
    }

    pub fn lifecycle(&self, class_id: &str) -> Option<&ClassLifecycle> {
        self.caches
            .class_index
            .get(class_id)
            .map(|&i| &self.core.lifecycles[i])
    }

    pub fn labeled(&self) -> &BTreeMap<String, String> {
        &self.core.labeled
    }

    pub fn model(&self) -> Option<&ClassifierModel> {
        self.core.model.as_ref()
    }

    pub fn outstanding(&self) -> Option<&QueryTicket> {
        self.core.outstanding.as_ref()
    }

    pub fn uniform_clean_run(&self) -> u64 {
        self.core.uniform_clean_run
    }

    pub fn uniform_stopping_count(&self) -> u64 {
        self.core.uniform_stopping_count
    }

    pub fn batch(&self) -> &BatchState {
        &self.core.batch
    }

    /// Label of an already-labeled example.
    pub fn label_of(&self, index: usize) -> Option<&str> {
        self.caches
            .label_of
            .get(index)
            .copied()
            .flatten()
            .map(|c| self.core.lifecycles[c].class_id.as_str())
    }

    /// Current active-learning scores over the pool, if a model exists.
    pub fn al_scores(&self) -> Option<&[f64]> {
        self.caches.al_scores.as_deref()
    }

    /// Estimator currently used for rule-out decisions and reporting.
    pub fn decision_estimate(&self) -> EstimateKind {
        self.core
            .config
            .strategy
            .decision_estimate(self.core.phase == Phase::Search)
    }

    pub fn class_reports(&self) -> Vec<ClassReport> {
        let kind = self.decision_estimate();
        let mut labeled = vec![0usize; self.core.lifecycles.len()];
        for c in self.caches.label_of.iter().flatten() {
            labeled[*c] += 1;
        }
        self.core
            .lifecycles
            .iter()
            .zip(labeled)
            .map(|(lc, labeled)| {
                let est = lc.estimate(kind);
                let iv = est.interval();
                ClassReport {
                    class_id: lc.class_id.clone(),
                    known: lc.known,
                    status: lc.status,
                    t_y: lc.observations,
                    labeled,
                    p_hat: est.p_hat,
                    sigma: est.sigma,
                    lower: iv.lower,
                    upper: iv.upper,
                    estimator: kind,
                }
            })
            .collect()
    }

    /// Draws the next example to label.
    pub fn next_query(&mut self) -> Result<QueryTicket> {
        self.check_can_query()?;
        let selection = self.select()?;
        Ok(self.issue(selection))
    }

    /// Issues a ticket for an example chosen by the caller. Such draws carry
    /// no propensity and never update frequency estimates.
    pub fn next_directed_query(&mut self, index: usize) -> Result<QueryTicket> {
        self.check_can_query()?;
        if index >= self.dataset.len() {
            return Err(EngineError::BadIndex(index));
        }
        Ok(self.issue(Selection {
            index,
            mode: QueryMode::Directed,
            prob: 1.0,
            uniform: false,
            importance: false,
        }))
    }

    fn check_can_query(&self) -> Result<()> {
        if let Some(t) = &self.core.outstanding {
            return Err(EngineError::TicketOutstanding(t.ticket_id));
        }
        if self.core.phase == Phase::Exhausted {
            return Err(EngineError::Exhausted);
        }
        Ok(())
    }

    fn issue(&mut self, s: Selection) -> QueryTicket {
        self.core.ledger.record(s.index, s.prob, s.uniform);
        let ticket = QueryTicket {
            ticket_id: self.core.next_ticket_id,
            example_index: s.index,
            example_id: self.dataset.examples[s.index].id.clone(),
            mode: s.mode,
            prob_at_draw: s.prob,
            uniform_step: s.uniform,
            importance: s.importance,
            free_lookup: self.caches.label_of[s.index].is_some(),
        };
        self.core.next_ticket_id += 1;
        self.core.outstanding = Some(ticket.clone());
        ticket
    }

    fn next_search_class(&self) -> Option<usize> {
        if !self.core.config.strategy.searches() {
            return None;
        }
        self.core
            .lifecycles
            .iter()
            .enumerate()
            .filter(|(_, lc)| {
                lc.known
                    && lc.status == ClassStatus::Searching
                    && self.core.batch.used.get(&lc.class_id).copied().unwrap_or(0)
                        < self.core.batch.allowance
            })
            .min_by(|(_, a), (_, b)| {
                a.search_draws
                    .cmp(&b.search_draws)
                    .then_with(|| a.class_id.cmp(&b.class_id))
            })
            .map(|(i, _)| i)
    }

    fn uniform_selection(&mut self, mode: QueryMode) -> Selection {
        let n = self.dataset.len();
        Selection {
            index: self.core.rng.random_range(0..n),
            mode,
            prob: 1.0 / n as f64,
            uniform: true,
            importance: true,
        }
    }

    /// Greedy argmax of `score` over unlabeled examples.
    fn greedy_unlabeled(&self, score: impl Fn(usize) -> f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, labeled) in self.caches.label_of.iter().enumerate() {
            if labeled.is_some() {
                continue;
            }
            let s = score(i);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }

    fn select(&mut self) -> Result<Selection> {
        let strategy = self.core.config.strategy;
        let epsilon = self.core.config.epsilon;
        let n = self.dataset.len();
        if let Some(k) = self.next_search_class() {
            let mode = QueryMode::ExemplarSearch {
                class_id: self.core.lifecycles[k].class_id.clone(),
            };
            if let Some(dist) = &self.caches.search[k] {
                let index = dist.sample(&mut self.core.rng);
                return Ok(Selection {
                    index,
                    mode,
                    prob: dist.probs[index],
                    uniform: false,
                    importance: true,
                });
            }
            let u: f64 = self.core.rng.random();
            if u < epsilon {
                return Ok(self.uniform_selection(mode));
            }
            let distances = &self.caches.distances[k];
            return Ok(match self.greedy_unlabeled(|i| -distances[i]) {
                Some(index) => Selection {
                    index,
                    mode,
                    prob: (1.0 - epsilon) + epsilon / n as f64,
                    uniform: false,
                    importance: false,
                },
                None => self.uniform_selection(mode),
            });
        }

        let forced_uniform = self.core.config.unknown_class_guarantee
            && self.core.uniform_clean_run < self.core.uniform_stopping_count;
        if forced_uniform || strategy == Strategy::Random || self.caches.al_scores.is_none() {
            return Ok(self.uniform_selection(QueryMode::Uniform));
        }
        if let Some(dist) = &self.caches.al_dist {
            let index = dist.sample(&mut self.core.rng);
            return Ok(Selection {
                index,
                mode: QueryMode::Uncertainty,
                prob: dist.probs[index],
                uniform: false,
                importance: true,
            });
        }
        let epsilon = if strategy == Strategy::Uncertainty {
            0.0
        } else {
            epsilon
        };
        let u: f64 = self.core.rng.random();
        if u < epsilon {
            return Ok(self.uniform_selection(QueryMode::Uniform));
        }
        let scores = self.caches.al_scores.as_ref().expect("checked above");
        Ok(match self.greedy_unlabeled(|i| scores[i]) {
            Some(index) => Selection {
                index,
                mode: QueryMode::Uncertainty,
                prob: (1.0 - epsilon) + epsilon / n as f64,
                uniform: false,
                importance: false,
            },
            None => self.uniform_selection(QueryMode::Uniform),
        })
    }

    fn class_or_discover(&mut self, label: &str, events: &mut Vec<Event>) -> usize {
        if let Some(&c) = self.caches.class_index.get(label) {
            return c;
        }
        let max_weight = self
            .core
            .lifecycles
            .first()
            .map(|lc| lc.importance.stats.range_max)
            .unwrap_or_else(|| {
                if self.core.alpha > 0.0 {
                    1.0 / (self.core.alpha * self.dataset.len() as f64)
                } else {
                    f64::MAX
                }
            });
        let delta = self.core.config.delta;
        // Every earlier draw carried a different label, i.e. a zero observation.
        self.core.lifecycles.push(ClassLifecycle {
            class_id: label.to_string(),
            known: false,
            status: ClassStatus::UnknownDiscovered,
            observations: 0,
            search_draws: 0,
            importance: FrequencyEstimate::importance(label, max_weight, delta)
                .with_zero_history(self.core.importance_draws),
            uniform: FrequencyEstimate::uniform(label, delta)
                .with_zero_history(self.core.uniform_draws),
            lambda: None,
            length_scale_curve: Vec::new(),
        });
        let c = self.core.lifecycles.len() - 1;
        self.caches.class_index.insert(label.to_string(), c);
        events.push(Event::UnknownClassDiscovered {
            class_id: label.to_string(),
        });
        c
    }

    /// Records the label for the outstanding ticket and advances the session.
    ///
    /// For a free lookup the stored label is authoritative and `label` is
    /// ignored.
    pub fn submit_label(&mut self, ticket_id: u64, label: &str) -> Result<Vec<Event>> {
        let ticket = match &self.core.outstanding {
            Some(t) if t.ticket_id == ticket_id => t.clone(),
            _ => return Err(EngineError::StaleTicket(ticket_id)),
        };
        if self.core.phase == Phase::Exhausted {
            return Err(EngineError::Exhausted);
        }
        let label = label.trim();
        if label.is_empty() && !ticket.free_lookup {
            return Err(EngineError::EmptyLabel);
        }
        self.core.outstanding = None;

        let mut events = Vec::new();
        let n = self.dataset.len();
        let cls = match self.caches.label_of[ticket.example_index] {
            Some(c) => c,
            None => self.class_or_discover(label, &mut events),
        };
        let label = self.core.lifecycles[cls].class_id.clone();
        {
            let lc = &mut self.core.lifecycles[cls];
            lc.observations += 1;
            if lc.status == ClassStatus::Searching {
                lc.status = ClassStatus::Found;
                events.push(Event::ClassFound {
                    class_id: label.clone(),
                });
            }
        }
        if !ticket.free_lookup {
            self.core
                .labeled
                .insert(ticket.example_id.clone(), label.clone());
            self.caches.label_of[ticket.example_index] = Some(cls);
            self.core.spent += 1;
            self.core.batch.spent += 1;
            if let QueryMode::ExemplarSearch { class_id } = &ticket.mode {
                *self.core.batch.used.entry(class_id.clone()).or_default() += 1;
            }
        }
        if let QueryMode::ExemplarSearch { class_id } = &ticket.mode {
            if let Some(&k) = self.caches.class_index.get(class_id) {
                self.core.lifecycles[k].search_draws += 1;
            }
        }
        if ticket.uniform_step {
            if self.core.lifecycles[cls].known {
                self.core.uniform_clean_run += 1;
            } else {
                self.core.uniform_clean_run = 0;
            }
        }

        if ticket.importance {
            for lc in &mut self.core.lifecycles {
                lc.importance.observe(&label, ticket.prob_at_draw, n)?;
            }
            self.core.importance_draws += 1;
        }
        if ticket.uniform_step {
            for lc in &mut self.core.lifecycles {
                lc.uniform.observe(&label, ticket.prob_at_draw, n)?;
            }
            self.core.uniform_draws += 1;
        }

        let strategy = self.core.config.strategy;
        if strategy.uses_stopping_rule() {
            let kind = self.decision_estimate();
            let gamma = self.core.config.gamma;
            for lc in &mut self.core.lifecycles {
                if lc.status == ClassStatus::RuledOut {
                    continue;
                }
                let est = lc.estimate(kind);
                if est.below_threshold(gamma) {
                    events.push(Event::ClassRuledOut {
                        class_id: lc.class_id.clone(),
                        p_hat: est.p_hat,
                        sigma: est.sigma,
                    });
                    lc.status = ClassStatus::RuledOut;
                }
            }
            self.drop_ruled_out_targets()?;
        }
        if self.core.phase == Phase::Search
            && !self
                .core
                .lifecycles
                .iter()
                .any(|lc| lc.status == ClassStatus::Searching)
        {
            self.core.phase = Phase::ActiveLearning;
        }

        let all_ruled_out = strategy.uses_stopping_rule()
            && !self.core.lifecycles.is_empty()
            && self
                .core
                .lifecycles
                .iter()
                .all(|lc| lc.status == ClassStatus::RuledOut);
        let termination = if all_ruled_out {
            Some(Termination::AllClassesRuledOut)
        } else if self.core.spent >= self.core.config.budget {
            Some(Termination::BudgetExhausted)
        } else if self.core.spent >= n {
            Some(Termination::PoolExhausted)
        } else {
            None
        };

        let batch_full = self.core.batch.spent >= self.core.config.batch_size;
        if (batch_full || termination.is_some()) && self.core.batch.spent > 0 {
            self.retrain()?;
            events.push(Event::BatchComplete {
                spent: self.core.spent,
                classes: self.core.model.as_ref().map_or(0, |m| m.num_classes()),
            });
            self.start_batch();
        }
        if let Some(t) = termination {
            let spent = self.core.spent;
            events.push(match t {
                Termination::BudgetExhausted => Event::BudgetExhausted { spent },
                Termination::AllClassesRuledOut => Event::AllClassesRuledOut { spent },
                Termination::PoolExhausted => Event::PoolExhausted { spent },
            });
            self.core.phase = Phase::Exhausted;
            self.core.termination = Some(t);
        }
        Ok(events)
    }

    /// A ruled-out class stops being a classifier target at once, not at the
    /// next retrain.
    fn drop_ruled_out_targets(&mut self) -> Result<()> {
        let Some(model) = &mut self.core.model else {
            return Ok(());
        };
        let mut changed = false;
        for lc in &self.core.lifecycles {
            if lc.status == ClassStatus::RuledOut {
                changed |= model.remove_class(&lc.class_id);
            }
        }
        if !changed {
            return Ok(());
        }
        if model.num_classes() == 0 {
            self.core.model = None;
        }
        self.refresh_al_cache()
    }

    /// Retrains on every labeled example whose class is not ruled out.
    fn retrain(&mut self) -> Result<()> {
        let ids = crate::dataset::id_index(&self.dataset.examples);
        let data: Vec<(&[f64], &str)> = self
            .core
            .labeled
            .iter()
            .filter(|(_, class)| {
                self.caches
                    .class_index
                    .get(class.as_str())
                    .is_some_and(|&c| self.core.lifecycles[c].status != ClassStatus::RuledOut)
            })
            .map(|(id, class)| (self.dataset.examples[ids[id.as_str()]].vec.as_slice(), class.as_str()))
            .collect();
        self.core.model = if data.is_empty() {
            None
        } else {
            Some(classifier::train(data, &self.core.config.train)?)
        };
        self.refresh_al_cache()
    }

    /// Drives the session to completion with a simulated oracle.
    /// `on_retrain` is called after every retrain and its result stored on
    /// that step.
    pub fn run_to_budget<M, O, F>(&mut self, mut oracle: O, mut on_retrain: F) -> Result<Vec<TrajectoryStep<M>>>
    where
        O: FnMut(&ExampleRecord) -> Option<String>,
        F: FnMut(&Session) -> M,
    {
        let mut steps = Vec::new();
        while self.core.phase != Phase::Exhausted {
            let ticket = self.next_query()?;
            let example = &self.dataset.examples[ticket.example_index];
            let label = match self.label_of(ticket.example_index) {
                Some(l) => l.to_string(),
                None => oracle(example).ok_or_else(|| EngineError::MissingLabel(example.id.clone()))?,
            };
            let events = self.submit_label(ticket.ticket_id, &label)?;
            let retrained = events.iter().any(|e| matches!(e, Event::BatchComplete { .. }));
            steps.push(TrajectoryStep {
                draw: self.draws(),
                spent: self.core.spent,
                example_id: ticket.example_id,
                events,
                metrics: retrained.then(|| on_retrain(self)),
            });
        }
        Ok(steps)
    }

    /// Replaces the current model, e.g. with one trained on seed data
    /// elsewhere. It is overwritten at the next retrain.
    pub fn warm_start(&mut self, model: ClassifierModel) -> Result<()> {
        if model.d != self.dataset.d {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dataset.d,
                found: model.d,
            }
            .into());
        }
        self.core.model = Some(model);
        self.refresh_al_cache()
    }

    /// Oracle reading the hidden labels stored in the pool.
    pub fn hidden_label_oracle(example: &ExampleRecord) -> Option<String> {
        example.label.clone()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot::new(&self.dataset, self.core.clone())
    }

    /// Restores a session from a snapshot taken against the same dataset.
    pub fn restore(snapshot: SessionSnapshot, dataset: Arc<Dataset>) -> Result<Self> {
        let core = snapshot.into_core(&dataset)?;
        let mut session = Self {
            caches: Caches {
                distances: exemplar_distances(&dataset),
                ..Default::default()
            },
            core,
            dataset,
        };
        session.rebuild_caches()?;
        Ok(session)
    }
}

struct Selection {
    index: usize,
    mode: QueryMode,
    prob: f64,
    uniform: bool,
    importance: bool,
}

fn exemplar_distances(dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset
        .class_ids
        .iter()
        .map(|c| {
            let ex = dataset.exemplar(c).expect("every class id has an exemplar");
            dataset
                .examples
                .iter()
                .map(|r| sampling::euclidean(&r.vec, &ex.vec))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests;
