//! Metrics, baselines, and the seeded experiment runner.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierModel;
use crate::dataset::{Dataset, ExampleRecord};
use crate::engine::{
    AlScore, ClassStatus, EngineError, Event, Phase, RunConfig, Session, Strategy, Termination,
};
use crate::rng::{self, Stream};

/// Added to empty cells before normalizing a count vector.
pub const KL_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("no common class has test examples")]
    NoEvaluableClass,
    #[error("imbalance is undefined when the pool distribution is uniform")]
    UniformPool,
    #[error("count vector has {found} entries, pool distribution has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("unknown strategy `{0}`; expected one of {names}", names = StrategySpec::NAMES.join(", "))]
    UnknownStrategy(String),
    #[error("{0} needs hidden labels on every pool example")]
    HiddenLabelsRequired(StrategySpec),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Mean over `classes` of per-class test accuracy. Classes without test
/// examples are skipped. Without a model every prediction counts as wrong.
pub fn balanced_accuracy(
    model: Option<&ClassifierModel>,
    test: &[ExampleRecord],
    classes: &[String],
) -> Result<f64> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut hits: BTreeMap<&str, (usize, usize)> =
        classes.iter().map(|c| (c.as_str(), (0, 0))).collect();
    for r in test {
        let Some(entry) = r.label.as_deref().and_then(|l| hits.get_mut(l)) else {
            continue;
        };
        entry.1 += 1;
        if let Some(m) = model {
            if m.predict(&r.vec).ok() == r.label.as_deref() {
                entry.0 += 1;
            }
        }
    }
    let mut total = 0.0;
    let mut used = 0;
    for (class, (correct, seen)) in hits {
        if seen == 0 {
            log::warn!("class `{class}` has no test examples; left out of balanced accuracy");
            continue;
        }
        total += correct as f64 / seen as f64;
        used += 1;
    }
    if used == 0 {
        return Err(EvalError::NoEvaluableClass);
    }
    Ok(total / used as f64)
}

fn kl_to_uniform(p: &[f64]) -> f64 {
    let k = p.len() as f64;
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * (x * k).ln())
        .sum()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

/// One minus the divergence of the collected label distribution from
/// uniform, relative to that of the pool. 1 is perfectly balanced, 0 is as
/// skewed as the pool.
pub fn imbalance_score(counts: &[f64], pool: &[f64]) -> Result<f64> {
    if counts.len() != pool.len() {
        return Err(EvalError::LengthMismatch {
            expected: pool.len(),
            found: counts.len(),
        });
    }
    let q = normalize(pool);
    let denom = kl_to_uniform(&q);
    if !(denom > 0.0) {
        return Err(EvalError::UniformPool);
    }
    let smoothed: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0.0 { c } else { KL_SMOOTHING })
        .collect();
    let p = normalize(&smoothed);
    Ok(1.0 - kl_to_uniform(&p) / denom)
}

/// Fraction of `classes` with at least one labeled example.
pub fn class_coverage(counts: &BTreeMap<String, usize>, classes: &[String]) -> f64 {
    if classes.is_empty() {
        return 1.0;
    }
    let covered = classes
        .iter()
        .filter(|c| counts.get(c.as_str()).is_some_and(|&n| n > 0))
        .count();
    covered as f64 / classes.len() as f64
}

/// Named query strategies, as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    Random,
    Entropy,
    LeastConfidence,
    EgalIw,
    EgalEps,
    EgalHybrid,
    /// Labels the least-represented common class directly, using the hidden
    /// labels. An upper reference, not a real strategy.
    GuidedOracle,
}

impl StrategySpec {
    pub const ALL: [StrategySpec; 7] = [
        Self::Random,
        Self::Entropy,
        Self::LeastConfidence,
        Self::EgalIw,
        Self::EgalEps,
        Self::EgalHybrid,
        Self::GuidedOracle,
    ];
    pub const NAMES: [&'static str; 7] = [
        "random",
        "entropy",
        "least_confidence",
        "egal_iw",
        "egal_eps",
        "egal_hybrid",
        "guided_oracle",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    /// Engine configuration for this strategy on top of `base`.
    pub fn configure(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Self::Random | Self::GuidedOracle => c.strategy = Strategy::Random,
            Self::Entropy => {
                c.strategy = Strategy::Uncertainty;
                c.al_score = AlScore::Entropy;
            }
            Self::LeastConfidence => {
                c.strategy = Strategy::Uncertainty;
                c.al_score = AlScore::LeastConfidence;
            }
            Self::EgalIw => c.strategy = Strategy::IwBoltzmann,
            Self::EgalEps => c.strategy = Strategy::EpsilonGreedy,
            Self::EgalHybrid => c.strategy = Strategy::Hybrid,
        }
        c
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategySpec {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| EvalError::UnknownStrategy(s.to_string()))
    }
}

/// Metrics after one retrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub spent: usize,
    pub balanced_accuracy: f64,
    /// `None` when the pool itself is balanced.
    pub imbalance: Option<f64>,
    pub coverage: f64,
    pub n_classes_found: usize,
    pub n_classes_ruled_out: usize,
    /// Labeled examples per true class.
    pub counts: BTreeMap<String, usize>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: StrategySpec,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    /// Spent budget at which every common class first had a label.
    pub full_coverage_at: Option<usize>,
    pub termination: Option<Termination>,
}

impl StrategyRun {
    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }
}

/// Runs one strategy to completion on a simulation dataset and records
/// metrics at every retrain. Common classes are those whose pool frequency is
/// at least `base.gamma`.
pub fn run_strategy(
    spec: StrategySpec,
    dataset: Arc<Dataset>,
    test: &[ExampleRecord],
    base: &RunConfig,
    seed: u64,
) -> Result<StrategyRun> {
    if !dataset.has_hidden_labels() {
        return Err(EvalError::HiddenLabelsRequired(spec));
    }
    let started = Instant::now();
    let config = RunConfig {
        seed,
        ..spec.configure(base)
    };
    let freqs = dataset.label_frequencies();
    let common = dataset.common_classes(base.gamma);
    let pool_dist: Vec<f64> = freqs.values().copied().collect();
    let mut guided = (spec == StrategySpec::GuidedOracle).then(|| GuidedOracle::new(&dataset, &common, seed));

    let mut session = Session::new(config, dataset.clone())?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut records = Vec::new();
    let mut full_coverage_at = (class_coverage(&counts, &common) >= 1.0).then_some(0);

    while session.phase() != Phase::Exhausted {
        let directed = guided.as_mut().and_then(|g| g.pick(&counts, &session));
        let ticket = match directed {
            Some(i) => session.next_directed_query(i)?,
            None => session.next_query()?,
        };
        let example = &dataset.examples[ticket.example_index];
        let label = match session.label_of(ticket.example_index) {
            Some(l) => l.to_string(),
            None => example
                .label
                .clone()
                .ok_or_else(|| EngineError::MissingLabel(example.id.clone()))?,
        };
        let events = session.submit_label(ticket.ticket_id, &label)?;
        if !ticket.free_lookup {
            *counts.entry(label).or_default() += 1;
            if full_coverage_at.is_none() && class_coverage(&counts, &common) >= 1.0 {
                full_coverage_at = Some(session.spent());
            }
        }
        if events.iter().any(|e| matches!(e, Event::BatchComplete { .. })) {
            let collected: Vec<f64> = freqs
                .keys()
                .map(|k| counts.get(k).copied().unwrap_or(0) as f64)
                .collect();
            let imbalance = match imbalance_score(&collected, &pool_dist) {
                Ok(v) => Some(v),
                Err(EvalError::UniformPool) => None,
                Err(e) => return Err(e),
            };
            records.push(MetricsRecord {
                spent: session.spent(),
                balanced_accuracy: balanced_accuracy(session.model(), test, &common)?,
                imbalance,
                coverage: class_coverage(&counts, &common),
                n_classes_found: session
                    .lifecycles()
                    .iter()
                    .filter(|lc| lc.observations > 0)
                    .count(),
                n_classes_ruled_out: session
                    .lifecycles()
                    .iter()
                    .filter(|lc| lc.status == ClassStatus::RuledOut)
                    .count(),
                counts: counts.clone(),
                wall_ms: started.elapsed().as_millis() as u64,
            });
        }
    }
    Ok(StrategyRun {
        strategy: spec,
        seed,
        records,
        full_coverage_at,
        termination: session.termination(),
    })
}

/// Round-robin over common classes, fewest labels first.
struct GuidedOracle {
    by_class: Vec<(String, Vec<usize>)>,
    rng: rng::EgalRng,
}

impl GuidedOracle {
    fn new(dataset: &Dataset, common: &[String], seed: u64) -> Self {
        let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in dataset.examples.iter().enumerate() {
            if let Some(l) = &r.label {
                index.entry(l.as_str()).or_default().push(i);
            }
        }
        let by_class = common
            .iter()
            .map(|c| (c.clone(), index.remove(c.as_str()).unwrap_or_default()))
            .collect();
        Self {
            by_class,
            rng: rng::stream(seed, Stream::Guided),
        }
    }

    fn pick(&mut self, counts: &BTreeMap<String, usize>, session: &Session) -> Option<usize> {
        let mut order: Vec<usize> = (0..self.by_class.len()).collect();
        // Stable sort keeps the lexicographic order of `common` among ties.
        order.sort_by_key(|&k| counts.get(&self.by_class[k].0).copied().unwrap_or(0));
        for k in order {
            let candidates = &mut self.by_class[k].1;
            candidates.retain(|&i| session.label_of(i).is_none());
            if !candidates.is_empty() {
                let j = self.rng.random_range(0..candidates.len());
                return Some(candidates[j]);
            }
        }
        None
    }
}

/// A named simulation dataset with its held-out test set.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub name: String,
    pub pool: Arc<Dataset>,
    pub test: Vec<ExampleRecord>,
}

/// One checkpoint of one run, as written to the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: StrategySpec,
    pub dataset: String,
    pub seed: u64,
    pub spent: usize,
    pub balanced_accuracy: f64,
    pub imbalance: Option<f64>,
    pub coverage: f64,
    pub n_classes_found: usize,
    pub n_classes_ruled_out: usize,
    pub wall_ms: u64,
}

pub const RESULT_COLUMNS: [&str; 10] = [
    "strategy",
    "dataset",
    "seed",
    "spent",
    "balanced_accuracy",
    "imbalance",
    "coverage",
    "n_classes_found",
    "n_classes_ruled_out",
    "wall_ms",
];

pub fn result_rows(dataset: &str, run: &StrategyRun) -> Vec<ResultRow> {
    run.records
        .iter()
        .map(|r| ResultRow {
            strategy: run.strategy,
            dataset: dataset.to_string(),
            seed: run.seed,
            spent: r.spent,
            balanced_accuracy: r.balanced_accuracy,
            imbalance: r.imbalance,
            coverage: r.coverage,
            n_classes_found: r.n_classes_found,
            n_classes_ruled_out: r.n_classes_ruled_out,
            wall_ms: r.wall_ms,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Sorted by strategy, dataset, seed.
    pub runs: Vec<(String, StrategyRun)>,
    pub rows: Vec<ResultRow>,
}

/// Runs every (strategy, dataset, seed) triple on a pool of `threads` workers
/// (0 means one per core). Output order does not depend on scheduling.
pub fn run_sweep(
    specs: &[StrategySpec],
    datasets: &[EvalDataset],
    seeds: &[u64],
    base: &RunConfig,
    threads: usize,
) -> Result<SweepOutput> {
    let mut jobs = Vec::new();
    for &spec in specs {
        for (d, _) in datasets.iter().enumerate() {
            for &seed in seeds {
                jobs.push((spec, d, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let mut runs = pool.install(|| {
        jobs.par_iter()
            .map(|&(spec, d, seed)| {
                let ds = &datasets[d];
                run_strategy(spec, ds.pool.clone(), &ds.test, base, seed)
                    .map(|run| (ds.name.clone(), run))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    runs.sort_by(|a, b| {
        (a.1.strategy.name(), &a.0, a.1.seed).cmp(&(b.1.strategy.name(), &b.0, b.1.seed))
    });
    let rows = runs.iter().flat_map(|(name, run)| result_rows(name, run)).collect();
    Ok(SweepOutput { runs, rows })
}

/// Mean and normal-approximation 95% interval across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    /// Fewer than two values, so no spread estimate.
    pub degenerate: bool,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                half_width: 0.0,
                degenerate: true,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self {
                mean,
                half_width: 0.0,
                degenerate: true,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            half_width: 1.96 * (var / n as f64).sqrt(),
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: StrategySpec,
    pub dataset: String,
    pub spent: usize,
    pub seeds: usize,
    pub balanced_accuracy: MeanCi,
    pub imbalance: MeanCi,
    pub coverage: MeanCi,
}

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "strategy",
    "dataset",
    "spent",
    "seeds",
    "balanced_accuracy_mean",
    "balanced_accuracy_ci_low",
    "balanced_accuracy_ci_high",
    "imbalance_mean",
    "imbalance_ci_low",
    "imbalance_ci_high",
    "coverage_mean",
    "coverage_ci_low",
    "coverage_ci_high",
    "degenerate",
];

/// Aggregates rows per (strategy, dataset, spent) across seeds. Seeds that
/// stopped before a checkpoint simply do not contribute to it.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.strategy.name(), r.dataset.as_str(), r.spent))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|mut g| {
            // Order by seed so the float sums do not depend on input order.
            g.sort_by_key(|r| r.seed);
            let col = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Vec<f64> {
                g.iter().filter_map(|r| f(r)).collect()
            };
            SummaryRow {
                strategy: g[0].strategy,
                dataset: g[0].dataset.clone(),
                spent: g[0].spent,
                seeds: g.len(),
                balanced_accuracy: MeanCi::of(&col(&|r| Some(r.balanced_accuracy))),
                imbalance: MeanCi::of(&col(&|r| r.imbalance)),
                coverage: MeanCi::of(&col(&|r| Some(r.coverage))),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.strategy.name().to_string(),
            r.dataset.clone(),
            r.seed.to_string(),
            r.spent.to_string(),
            r.balanced_accuracy.to_string(),
            fmt_opt(r.imbalance),
            r.coverage.to_string(),
            r.n_classes_found.to_string(),
            r.n_classes_ruled_out.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        let mut rec = vec![
            r.strategy.name().to_string(),
            r.dataset.clone(),
            r.spent.to_string(),
            r.seeds.to_string(),
        ];
        for m in [r.balanced_accuracy, r.imbalance, r.coverage] {
            if m.mean.is_nan() {
                rec.extend([String::new(), String::new(), String::new()]);
            } else {
                rec.push(m.mean.to_string());
                rec.push((m.mean - m.half_width).to_string());
                rec.push((m.mean + m.half_width).to_string());
            }
        }
        rec.push(r.balanced_accuracy.degenerate.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
