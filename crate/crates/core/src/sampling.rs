//! Sampling distributions over the pool and the frequency estimators fed by
//! their draws.
//!
//! Search draws come from a Boltzmann distribution on the distance to a class
//! exemplar, `q_i ∝ exp(-d_i / λ)`, mixed with a uniform floor so that every
//! importance weight `(1/n) / q_i` is bounded by `1 / (α n)`. Each draw yields
//! `z = w · 1(label = y)` for every tracked class `y`, an unbiased estimate of
//! the class frequency.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, Interval, WeightedSampleStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("propensity floor {floor} is infeasible for a pool of {n} (needs floor * n <= 1)")]
    InfeasibleFloor { floor: f64, n: usize },
    #[error("cannot build a distribution over an empty pool")]
    EmptyPool,
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
    #[error("effective sample size is undefined for all-zero counts")]
    ZeroCounts,
    #[error("length-scale grid is empty")]
    EmptyGrid,
    #[error("draw probability must be positive, got {0}")]
    ZeroPropensity(f64),
}

pub type Result<T> = std::result::Result<T, SamplingError>;

/// A categorical distribution over pool indices with a propensity floor.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    pub probs: Vec<f64>,
    pub lambda: f64,
    pub floor: f64,
    cdf: Vec<f64>,
}

impl SamplingDistribution {
    fn from_logits(logits: Vec<f64>, lambda: f64, floor: f64) -> Result<Self> {
        let n = logits.len();
        if n == 0 {
            return Err(SamplingError::EmptyPool);
        }
        if !(floor >= 0.0) || floor * n as f64 > 1.0 + 1e-12 {
            return Err(SamplingError::InfeasibleFloor { floor, n });
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        let mix = (floor * n as f64).min(1.0);
        for p in &mut probs {
            *p = (1.0 - mix) * (*p / total) + floor;
        }
        Ok(Self::with_probs(probs, lambda, floor))
    }

    fn with_probs(probs: Vec<f64>, lambda: f64, floor: f64) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self {
            probs,
            lambda,
            floor,
            cdf,
        }
    }

    /// Uniform distribution over `n` items.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SamplingError::EmptyPool);
        }
        Ok(Self::with_probs(vec![1.0 / n as f64; n], f64::INFINITY, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Draws one index by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("distribution is nonempty");
        let u = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        // Skip zero-mass entries that rounding could land on.
        let mut i = i.min(self.probs.len() - 1);
        while self.probs[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && !lambda.is_nan() {
        Ok(())
    } else {
        Err(SamplingError::InvalidTemperature(lambda))
    }
}

/// `q_i ∝ exp(-d_i / λ)`, floored by mixing with the uniform distribution:
/// `q'_i = (1 - α n) q_i + α`.
pub fn boltzmann_distribution(
    distances: &[f64],
    lambda: f64,
    floor: f64,
) -> Result<SamplingDistribution> {
    check_lambda(lambda)?;
    if let Some(i) = distances.iter().position(|d| !d.is_finite()) {
        return Err(SamplingError::NonFinite(i));
    }
    let logits = distances.iter().map(|d| -d / lambda).collect();
    SamplingDistribution::from_logits(logits, lambda, floor)
}

/// Softmax over `score / λ` (higher score, higher probability), floored as in
/// [`boltzmann_distribution`].
pub fn score_distribution(scores: &[f64], lambda: f64, floor: f64) -> Result<SamplingDistribution> {
    check_lambda(lambda)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(SamplingError::NonFinite(i));
    }
    let logits = scores.iter().map(|s| s / lambda).collect();
    SamplingDistribution::from_logits(logits, lambda, floor)
}

/// One recorded draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub index: usize,
    pub prob: f64,
    pub uniform: bool,
}

/// With-replacement draw history and the per-index count vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawLedger {
    pub counts: Vec<u64>,
    pub draws: Vec<DrawRecord>,
}

impl DrawLedger {
    pub fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            draws: Vec::new(),
        }
    }

    pub fn record(&mut self, index: usize, prob: f64, uniform: bool) {
        self.counts[index] += 1;
        self.draws.push(DrawRecord {
            index,
            prob,
            uniform,
        });
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Draws an index from `dist` and appends it to `ledger`.
pub fn draw<R: Rng + ?Sized>(
    dist: &SamplingDistribution,
    ledger: &mut DrawLedger,
    uniform: bool,
    rng: &mut R,
) -> usize {
    let i = dist.sample(rng);
    ledger.record(i, dist.probs[i], uniform);
    i
}

/// Which observations an estimator consumes and which bound it uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// Inverse-propensity weighted draws, empirical-Bernstein width.
    Importance,
    /// Uniform draws only, Bernoulli KL (Chernoff) width.
    Uniform,
}

/// Running estimate of one class's pool frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub class_id: String,
    pub kind: EstimateKind,
    pub p_hat: f64,
    pub sigma: f64,
    pub n_draws: u64,
    pub stats: WeightedSampleStats,
    pub delta: f64,
}

impl FrequencyEstimate {
    /// Importance-weighted estimator whose observations lie in
    /// `[0, max_weight]`, `max_weight = 1 / (α n)`.
    pub fn importance(class_id: impl Into<String>, max_weight: f64, delta: f64) -> Self {
        Self::from_stats(
            class_id.into(),
            EstimateKind::Importance,
            WeightedSampleStats::new(max_weight),
            delta,
        )
    }

    pub fn uniform(class_id: impl Into<String>, delta: f64) -> Self {
        Self::from_stats(
            class_id.into(),
            EstimateKind::Uniform,
            WeightedSampleStats::new(1.0),
            delta,
        )
    }

    /// Estimator that has already seen `n` observations, all zero.
    pub fn with_zero_history(mut self, n: u64) -> Self {
        self.stats = WeightedSampleStats::zeros(n, self.stats.range_max);
        self.refresh();
        self
    }

    fn from_stats(class_id: String, kind: EstimateKind, stats: WeightedSampleStats, delta: f64) -> Self {
        let mut est = Self {
            class_id,
            kind,
            p_hat: 0.0,
            sigma: 0.0,
            n_draws: 0,
            stats,
            delta,
        };
        est.refresh();
        est
    }

    fn refresh(&mut self) {
        self.n_draws = self.stats.n;
        self.p_hat = self.stats.mean;
        self.sigma = match self.kind {
            EstimateKind::Importance => {
                bounds::bernstein_width(&self.stats, self.delta).unwrap_or(self.stats.range_max)
            }
            EstimateKind::Uniform => {
                bounds::chernoff_upper(self.p_hat, self.stats.n, self.delta) - self.p_hat
            }
        };
    }

    /// Adds one draw. `prob_at_draw` is the propensity of the drawn item;
    /// uniform estimators ignore it.
    pub fn observe(&mut self, drawn_label: &str, prob_at_draw: f64, n_pool: usize) -> Result<()> {
        let hit = drawn_label == self.class_id;
        let z = match self.kind {
            EstimateKind::Importance => {
                if !(prob_at_draw > 0.0) {
                    return Err(SamplingError::ZeroPropensity(prob_at_draw));
                }
                let w = (1.0 / n_pool as f64) / prob_at_draw;
                debug_assert!(
                    w <= self.stats.range_max * (1.0 + 1e-9),
                    "importance weight {w} above bound {}",
                    self.stats.range_max
                );
                if hit {
                    w
                } else {
                    0.0
                }
            }
            EstimateKind::Uniform => f64::from(u8::from(hit)),
        };
        self.stats.push(z);
        self.refresh();
        Ok(())
    }

    /// Current `1 - δ` interval on the class frequency.
    pub fn interval(&self) -> Interval {
        match self.kind {
            EstimateKind::Importance => bounds::bernstein_interval(&self.stats, self.delta)
                .unwrap_or(Interval {
                    lower: 0.0,
                    upper: self.stats.range_max.min(1.0),
                    delta: self.delta,
                    n: self.stats.n,
                }),
            EstimateKind::Uniform => bounds::chernoff_interval(self.p_hat, self.stats.n, self.delta),
        }
    }

    /// Stopping rule: the class is provably rarer than `gamma`.
    pub fn below_threshold(&self, gamma: f64) -> bool {
        self.p_hat + self.sigma < gamma
    }
}

/// Functional form of [`FrequencyEstimate::observe`].
pub fn update_frequency_estimate(
    est: &FrequencyEstimate,
    drawn_label: &str,
    prob_at_draw: f64,
    n_pool: usize,
) -> Result<FrequencyEstimate> {
    let mut next = est.clone();
    next.observe(drawn_label, prob_at_draw, n_pool)?;
    Ok(next)
}

/// Effective sample size `1 / Σ w_i²` of a count vector, `w_i = c_i / Σ c_j`.
pub fn ess_score(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(SamplingError::ZeroCounts);
    }
    let total = total as f64;
    let sum_sq: f64 = counts
        .iter()
        .map(|&c| {
            let w = c as f64 / total;
            w * w
        })
        .sum();
    Ok(1.0 / sum_sq)
}

/// Result of a length-scale search, including the whole ESS curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthScaleFit {
    pub lambda: f64,
    /// `(λ, mean ESS)` for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Mean ESS of `runs` simulated batches of `batch` with-replacement draws.
pub fn expected_ess<R: Rng + ?Sized>(
    dist: &SamplingDistribution,
    batch: usize,
    runs: usize,
    rng: &mut R,
) -> f64 {
    let mut total = 0.0;
    let mut counts: HashMap<usize, u64> = HashMap::with_capacity(batch);
    for _ in 0..runs {
        counts.clear();
        for _ in 0..batch {
            *counts.entry(dist.sample(rng)).or_default() += 1;
        }
        let c: Vec<u64> = counts.values().copied().collect();
        total += ess_score(&c).expect("batch is nonempty");
    }
    total / runs as f64
}

/// Picks the temperature minimizing expected batch ESS over `grid`.
/// Ties resolve to the smaller temperature.
pub fn optimize_length_scale<R: Rng + ?Sized>(
    distances: &[f64],
    batch: usize,
    runs: usize,
    grid: &[f64],
    rng: &mut R,
) -> Result<LengthScaleFit> {
    if grid.is_empty() {
        return Err(SamplingError::EmptyGrid);
    }
    let batch = batch.max(1);
    let runs = runs.max(1);
    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let dist = boltzmann_distribution(distances, lambda, 0.0)?;
        let ess = expected_ess(&dist, batch, runs, rng);
        curve.push((lambda, ess));
        let better = match best {
            None => true,
            Some((bl, be)) => ess < be || (ess == be && lambda < bl),
        };
        if better {
            best = Some((lambda, ess));
        }
    }
    Ok(LengthScaleFit {
        lambda: best.expect("grid is nonempty").0,
        curve,
    })
}

/// `count` log-spaced temperatures between the 1st and 99th percentile of
/// `distances`. The lower end is kept strictly positive.
pub fn length_scale_grid(distances: &[f64], count: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = distances.iter().copied().filter(|d| d.is_finite()).collect();
    if sorted.is_empty() || count == 0 {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let pct = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let hi = pct(0.99);
    if hi <= 0.0 {
        return vec![1.0];
    }
    let mut lo = pct(0.01);
    if lo <= 0.0 {
        lo = sorted.iter().copied().find(|&d| d > 0.0).unwrap_or(hi);
    }
    if count == 1 || lo >= hi {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Participation ratio `1 / Σ q_i²`: roughly how many examples share the mass.
pub fn participation_ratio(dist: &SamplingDistribution) -> f64 {
    1.0 / dist.probs.iter().map(|p| p * p).sum::<f64>()
}

/// Smallest temperature whose Boltzmann distribution spreads over at least
/// `spread` examples, by bisection in log space below `hi`. Returns `hi` if
/// even that is too sharp.
pub fn spreading_temperature(distances: &[f64], spread: f64, hi: f64) -> Result<f64> {
    let pr = |lambda: f64| boltzmann_distribution(distances, lambda, 0.0).map(|q| participation_ratio(&q));
    if pr(hi)? <= spread {
        return Ok(hi);
    }
    let (mut a, mut b) = ((hi * 1e-9).ln(), hi.ln());
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if pr(mid.exp())? < spread {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(b.exp())
}

/// Search grid: [`length_scale_grid`] extended downward, if needed, to the
/// temperature that spreads mass over one batch of examples.
///
/// In high dimensions distances concentrate, so even the 1st percentile
/// distance is far hotter than the gaps between near and far points and the
/// plain percentile grid samples almost uniformly. The lower end still keeps
/// the grid away from a single-point distribution.
pub fn search_length_scale_grid(distances: &[f64], count: usize, batch: usize) -> Result<Vec<f64>> {
    let base = length_scale_grid(distances, count);
    let (Some(&lo), Some(&hi)) = (base.first(), base.last()) else {
        return Ok(base);
    };
    let spread = spreading_temperature(distances, batch.max(2) as f64, hi)?;
    if spread >= lo || count < 2 {
        return Ok(base);
    }
    let (a, b) = (spread.ln(), hi.ln());
    Ok((0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect())
}

/// ε-greedy selection. With probability ε returns a uniform index over all of
/// `scores` (flag `true`); otherwise the argmax over entries that are not
/// `-inf`, lowest index on ties. Falls back to a uniform step when no entry is
/// eligible for the greedy step.
pub fn epsilon_greedy_select<R: Rng + ?Sized>(
    scores: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Option<(usize, bool)> {
    if scores.is_empty() {
        return None;
    }
    let u: f64 = rng.random();
    if u < epsilon {
        return Some((rng.random_range(0..scores.len()), true));
    }
    match argmax(scores) {
        Some(i) => Some((i, false)),
        None => Some((rng.random_range(0..scores.len()), true)),
    }
}

/// Index of the largest finite-or-`+inf` score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY || s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Euclidean distance.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn boltzmann_examples() {
        let q = boltzmann_distribution(&[3.0; 5], 0.7, 0.0).unwrap();
        for p in &q.probs {
            assert_abs_diff_eq!(*p, 0.2, epsilon = 1e-15);
        }
        let lambda = 1.3;
        let q = boltzmann_distribution(&[0.0, lambda * 2f64.ln()], lambda, 0.0).unwrap();
        assert_abs_diff_eq!(q.probs[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.probs[1], 1.0 / 3.0, epsilon = 1e-12);
        let q = boltzmann_distribution(&[0.5, 0.1, 0.9], 1e-9, 0.0).unwrap();
        assert_abs_diff_eq!(q.probs[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn boltzmann_rejects_bad_inputs() {
        assert!(boltzmann_distribution(&[1.0], 0.0, 0.0).is_err());
        assert!(boltzmann_distribution(&[1.0, 2.0], 1.0, 0.6).is_err());
        assert!(boltzmann_distribution(&[1.0, f64::NAN], 1.0, 0.0).is_err());
    }

    #[test]
    fn floor_bounds_weights() {
        let d: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let alpha = 0.2 / 50.0;
        let q = boltzmann_distribution(&d, 0.5, alpha).unwrap();
        let bound = 1.0 / (alpha * 50.0);
        for &p in &q.probs {
            assert!(p >= alpha * (1.0 - 1e-12));
            assert!((1.0 / 50.0) / p <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn score_distribution_examples() {
        let q = score_distribution(&[0.4; 3], 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(q.probs[2], 1.0 / 3.0, epsilon = 1e-15);
        let lambda = 0.25;
        let q = score_distribution(&[-0.5, -0.5 + lambda * 3f64.ln()], lambda, 0.0).unwrap();
        assert_abs_diff_eq!(q.probs[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(q.probs[1], 0.75, epsilon = 1e-12);
        let q = score_distribution(&[-1.0, -0.2, -0.9], 1e12, 0.0).unwrap();
        for p in &q.probs {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn draw_from_point_mass_and_ledger_counts() {
        let q = boltzmann_distribution(&[10.0, 0.0, 10.0], 1e-6, 0.0).unwrap();
        let mut ledger = DrawLedger::new(3);
        let mut rng = rng::stream(1, Stream::Session);
        for _ in 0..100 {
            assert_eq!(draw(&q, &mut ledger, false, &mut rng), 1);
        }
        let u = SamplingDistribution::uniform(3).unwrap();
        for _ in 0..200 {
            draw(&u, &mut ledger, true, &mut rng);
        }
        let mut recount = vec![0u64; 3];
        for d in &ledger.draws {
            recount[d.index] += 1;
        }
        assert_eq!(recount, ledger.counts);
    }

    #[test]
    fn uniform_draw_frequencies() {
        let n = 10;
        let draws = 100_000;
        let u = SamplingDistribution::uniform(n).unwrap();
        let mut ledger = DrawLedger::new(n);
        let mut rng = rng::stream(2, Stream::Session);
        for _ in 0..draws {
            draw(&u, &mut ledger, true, &mut rng);
        }
        let p = 1.0 / n as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for &c in &ledger.counts {
            assert!((c as f64 / draws as f64 - p).abs() <= 5.0 * se);
        }
    }

    #[test]
    fn uniform_q_gives_plain_sample_mean() {
        let n = 8;
        let mut est = FrequencyEstimate::importance("a", 1.0, 0.05);
        let labels = ["a", "b", "a", "c", "b", "b"];
        for l in labels {
            est.observe(l, 1.0 / n as f64, n).unwrap();
        }
        assert_abs_diff_eq!(est.p_hat, 2.0 / 6.0, epsilon = 1e-15);
        assert_eq!(est.n_draws, 6);
    }

    #[test]
    fn exact_proposal_gives_constant_positive_weight() {
        // 4-element pool; items 0 and 2 carry the label, p_y = 1/2.
        let labels = ["y", "x", "y", "x"];
        let q = [0.4, 0.1, 0.1, 0.4];
        let weights: Vec<f64> = q.iter().map(|qi| 0.25 / qi).collect();
        let expect: f64 = (0..4)
            .map(|i| q[i] * if labels[i] == "y" { weights[i] } else { 0.0 })
            .sum();
        assert_abs_diff_eq!(expect, 0.5, epsilon = 1e-15);
        // q proportional to the label indicator on the positive items.
        let q_exact = [0.25, 0.25, 0.25, 0.25];
        let pos: Vec<f64> = (0..4)
            .filter(|&i| labels[i] == "y")
            .map(|i| 0.25 / q_exact[i])
            .collect();
        assert!(pos.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn importance_rejects_zero_propensity() {
        let mut est = FrequencyEstimate::importance("a", 10.0, 0.05);
        assert_eq!(est.observe("a", 0.0, 5), Err(SamplingError::ZeroPropensity(0.0)));
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess_score(&[8]).unwrap(), 1.0);
        assert_abs_diff_eq!(ess_score(&[1; 6]).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ess_score(&[3, 1]).unwrap(), 1.6, epsilon = 1e-12);
        assert_eq!(ess_score(&[0, 0]), Err(SamplingError::ZeroCounts));
    }

    #[test]
    fn length_scale_trivial_grids() {
        let d = [0.0, 1.0, 2.0, 3.0];
        let mut rng = rng::stream(0, Stream::LengthScale);
        let fit = optimize_length_scale(&d, 8, 4, &[0.7], &mut rng).unwrap();
        assert_eq!(fit.lambda, 0.7);
        // Point mass versus (near) uniform.
        let fit = optimize_length_scale(&d, 8, 16, &[1e6, 1e-6], &mut rng).unwrap();
        assert_eq!(fit.lambda, 1e-6);
        assert_eq!(fit.curve[1].1, 1.0);
        assert!(optimize_length_scale(&d, 8, 4, &[], &mut rng).is_err());
    }

    #[test]
    fn grid_is_log_spaced_and_positive() {
        let d: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let g = length_scale_grid(&d, 16);
        assert_eq!(g.len(), 16);
        assert!(g[0] > 0.0);
        let ratios: Vec<f64> = g.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert_abs_diff_eq!(*r, ratios[0], epsilon = 1e-9);
        }
        assert_eq!(length_scale_grid(&[0.0; 5], 16), vec![1.0]);
    }

    #[test]
    fn search_grid_reaches_down_to_a_batch_sized_spread() {
        // Concentrated distances: the nearest 20 points sit 1.0 closer than the rest.
        let mut d = vec![10.0; 980];
        d.extend((0..20).map(|i| 9.0 + i as f64 * 1e-3));
        let plain = length_scale_grid(&d, 16);
        let g = search_length_scale_grid(&d, 16, 10).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g[15], plain[15]);
        assert!(g[0] < plain[0]);
        let q = boltzmann_distribution(&d, g[0], 0.0).unwrap();
        assert_abs_diff_eq!(participation_ratio(&q), 10.0, epsilon = 1e-6);

        // Spread-out distances leave the percentile grid alone.
        let d: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        assert_eq!(search_length_scale_grid(&d, 16, 10).unwrap(), length_scale_grid(&d, 16));
    }

    #[test]
    fn participation_ratio_grows_with_temperature() {
        let d: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
        let mut last = 0.0;
        for lambda in [0.01, 0.1, 0.5, 1.0, 5.0, 50.0] {
            let pr = participation_ratio(&boltzmann_distribution(&d, lambda, 0.0).unwrap());
            assert!(pr >= last);
            last = pr;
        }
        assert!(last <= 50.0 + 1e-9);
    }

    #[test]
    fn epsilon_greedy_rules() {
        let mut rng = rng::stream(3, Stream::Session);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy_select(&[0.1, 0.9, 0.9], 0.0, &mut rng), Some((1, false)));
        }
        let scores = [f64::NEG_INFINITY, 0.2, 0.3];
        assert_eq!(epsilon_greedy_select(&scores, 0.0, &mut rng), Some((2, false)));
        let n = 7;
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            let (i, flag) = epsilon_greedy_select(&vec![0.0; n], 1.0, &mut rng).unwrap();
            assert!(flag);
            counts[i] += 1;
        }
        let p = 1.0 / n as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - p).abs() <= 5.0 * se);
        }
    }

    proptest! {
        #[test]
        fn distributions_are_valid(
            d in proptest::collection::vec(0.0f64..50.0, 1..40),
            lambda in 0.01f64..20.0,
            frac in 0.0f64..=1.0,
        ) {
            let floor = frac / d.len() as f64;
            let q = boltzmann_distribution(&d, lambda, floor).unwrap();
            let sum: f64 = q.probs.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            for &p in &q.probs {
                prop_assert!(p >= floor * (1.0 - 1e-12));
            }
        }

        #[test]
        fn importance_weighting_is_exactly_unbiased(
            raw in proptest::collection::vec(0.0f64..5.0, 1..=10),
            mask in proptest::collection::vec(any::<bool>(), 10),
            lambda in 0.05f64..5.0,
            frac in 0.0f64..=1.0,
        ) {
            let n = raw.len();
            let q = boltzmann_distribution(&raw, lambda, frac / n as f64).unwrap();
            let p_y = mask[..n].iter().filter(|&&m| m).count() as f64 / n as f64;
            let expectation: f64 = (0..n)
                .map(|i| if mask[i] { q.probs[i] * ((1.0 / n as f64) / q.probs[i]) } else { 0.0 })
                .sum();
            prop_assert!((expectation - p_y).abs() <= 1e-12);
        }

        #[test]
        fn ess_within_bounds(counts in proptest::collection::vec(0u64..20, 1..30)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let distinct = counts.iter().filter(|&&c| c > 0).count() as f64;
            let ess = ess_score(&counts).unwrap();
            prop_assert!(ess >= 1.0 - 1e-12 && ess <= distinct + 1e-9);
        }
    }
}
