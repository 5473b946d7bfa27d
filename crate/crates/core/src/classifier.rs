//! L2-regularized multinomial logistic regression on embedding vectors, and
//! the uncertainty scores computed from its predictions.
//!
//! The training objective is
//!
//! ```text
//! J(W) = mean_i CE(softmax(W [x_i; 1]), y_i) + ||W_no_bias||² / (2 C N)
//! ```
//!
//! with `C` the regularization strength (larger is weaker), minimized by
//! full-batch gradient descent with Armijo backtracking from `W = 0`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("cannot train on an empty labeled set")]
    EmptyTrainingSet,
    #[error("expected a vector of dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("regularization strength must be positive, got {0}")]
    InvalidRegularization(f64),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub reg_strength: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            reg_strength: 1.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

/// A trained linear softmax classifier. `weights` is row-major
/// `K × (d + 1)`, the last column holding the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub class_ids: Vec<String>,
    pub d: usize,
    pub weights: Vec<f64>,
    pub reg_strength: f64,
}

/// Class probabilities, aligned with the model's `class_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(pub Vec<f64>);

impl ProbVector {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
}

fn logits_into(weights: &[f64], k: usize, d: usize, x: &[f64], out: &mut [f64]) {
    for c in 0..k {
        let row = &weights[c * (d + 1)..(c + 1) * (d + 1)];
        out[c] = row[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[d];
    }
}

impl ClassifierModel {
    /// Model with all-zero weights (uniform predictions).
    pub fn zeros(class_ids: Vec<String>, d: usize, reg_strength: f64) -> Self {
        let k = class_ids.len();
        Self {
            class_ids,
            d,
            weights: vec![0.0; k * (d + 1)],
            reg_strength,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        if x.len() != self.d {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.num_classes()];
        logits_into(&self.weights, self.num_classes(), self.d, x, &mut out);
        softmax_in_place(&mut out);
        Ok(ProbVector(out))
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let p = self.predict_proba(x)?;
        Ok(&self.class_ids[p.argmax()])
    }

    /// Drops one class's weights; predictions renormalize over the rest.
    /// Returns whether the class was present.
    pub fn remove_class(&mut self, class_id: &str) -> bool {
        let Some(c) = self.class_ids.iter().position(|id| id == class_id) else {
            return false;
        };
        let stride = self.d + 1;
        self.weights.drain(c * stride..(c + 1) * stride);
        self.class_ids.remove(c);
        true
    }
}

/// Convenience wrapper around [`ClassifierModel::predict_proba`].
pub fn predict_proba(model: &ClassifierModel, x: &[f64]) -> Result<ProbVector> {
    model.predict_proba(x)
}

/// Prediction entropy in nats.
pub fn entropy_score(p: &ProbVector) -> f64 {
    -p.0.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Negated top-class probability; larger means less confident.
pub fn least_confidence_score(p: &ProbVector) -> f64 {
    -p.0.iter().copied().fold(0.0, f64::max)
}

/// A labeled design matrix with classes mapped to `0..k`.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub k: usize,
    pub d: usize,
    pub reg_strength: f64,
}

impl TrainingProblem {
    pub fn num_params(&self) -> usize {
        self.k * (self.d + 1)
    }

    fn reg_coef(&self) -> f64 {
        1.0 / (self.reg_strength * self.x.len() as f64)
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let n = self.x.len() as f64;
        let mut logits = vec![0.0; self.k];
        let mut loss = 0.0;
        for (x, &y) in self.x.iter().zip(&self.y) {
            logits_into(w, self.k, self.d, x, &mut logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            loss += lse - logits[y];
        }
        let penalty: f64 = (0..self.k)
            .flat_map(|c| w[c * (self.d + 1)..c * (self.d + 1) + self.d].iter())
            .map(|v| v * v)
            .sum();
        loss / n + 0.5 * self.reg_coef() * penalty
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.x.len() as f64;
        let stride = self.d + 1;
        let mut grad = vec![0.0; self.num_params()];
        let mut p = vec![0.0; self.k];
        for (x, &y) in self.x.iter().zip(&self.y) {
            logits_into(w, self.k, self.d, x, &mut p);
            softmax_in_place(&mut p);
            p[y] -= 1.0;
            for c in 0..self.k {
                let r = p[c] / n;
                let row = &mut grad[c * stride..(c + 1) * stride];
                for (g, v) in row[..self.d].iter_mut().zip(x) {
                    *g += r * v;
                }
                row[self.d] += r;
            }
        }
        let reg = self.reg_coef();
        for c in 0..self.k {
            for j in 0..self.d {
                grad[c * stride + j] += reg * w[c * stride + j];
            }
        }
        grad
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Trains on `(vector, class id)` pairs. Classes are ordered by id.
pub fn train<'a, I>(labeled: I, config: &TrainConfig) -> Result<ClassifierModel>
where
    I: IntoIterator<Item = (&'a [f64], &'a str)>,
{
    train_with_report(labeled, config).map(|(m, _)| m)
}

pub fn train_with_report<'a, I>(
    labeled: I,
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport)>
where
    I: IntoIterator<Item = (&'a [f64], &'a str)>,
{
    if !(config.reg_strength > 0.0) {
        return Err(ClassifierError::InvalidRegularization(config.reg_strength));
    }
    let labeled: Vec<(&[f64], &str)> = labeled.into_iter().collect();
    let Some(first) = labeled.first() else {
        return Err(ClassifierError::EmptyTrainingSet);
    };
    let d = first.0.len();
    let class_ids: Vec<String> = labeled
        .iter()
        .map(|(_, c)| *c)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let mut x = Vec::with_capacity(labeled.len());
    let mut y = Vec::with_capacity(labeled.len());
    for (v, c) in &labeled {
        if v.len() != d {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
        x.push(v.to_vec());
        y.push(class_ids.binary_search_by(|id| id.as_str().cmp(c)).expect("class collected above"));
    }
    let problem = TrainingProblem {
        x,
        y,
        k: class_ids.len(),
        d,
        reg_strength: config.reg_strength,
    };
    let (weights, report) = minimize(&problem, config);
    Ok((
        ClassifierModel {
            class_ids,
            d,
            weights,
            reg_strength: config.reg_strength,
        },
        report,
    ))
}

fn minimize(problem: &TrainingProblem, config: &TrainConfig) -> (Vec<f64>, TrainReport) {
    const ARMIJO: f64 = 1e-4;
    const MIN_STEP: f64 = 1e-20;
    let mut w = vec![0.0; problem.num_params()];
    let mut f = problem.objective(&w);
    let mut trace = vec![f];
    if problem.k < 2 {
        return (
            w,
            TrainReport {
                iterations: 0,
                converged: true,
                objective_trace: trace,
            },
        );
    }
    let mut step = 1.0;
    let mut candidate = vec![0.0; w.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        let g = problem.gradient(&w);
        let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if g_inf <= config.tol {
            converged = true;
            break;
        }
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        while step >= MIN_STEP {
            for ((c, wi), gi) in candidate.iter_mut().zip(&w).zip(&g) {
                *c = wi - step * gi;
            }
            let f_new = problem.objective(&candidate);
            if f_new <= f - ARMIJO * step * g_sq {
                std::mem::swap(&mut w, &mut candidate);
                f = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
        iterations += 1;
        step *= 2.0;
    }
    (
        w,
        TrainReport {
            iterations,
            converged,
            objective_trace: trace,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_d_separable() -> Vec<(Vec<f64>, &'static str)> {
        (0..20)
            .map(|i| {
                if i < 10 {
                    (vec![-1.0 - i as f64 * 0.1], "neg")
                } else {
                    (vec![1.0 + (i - 10) as f64 * 0.1], "pos")
                }
            })
            .collect()
    }

    fn as_refs<'a>(data: &'a [(Vec<f64>, &'static str)]) -> Vec<(&'a [f64], &'a str)> {
        data.iter().map(|(v, c)| (v.as_slice(), *c)).collect()
    }

    #[test]
    fn separable_training_accuracy() {
        let data = one_d_separable();
        let (model, report) = train_with_report(as_refs(&data), &TrainConfig::default()).unwrap();
        for (v, c) in &data {
            assert_eq!(model.predict(v).unwrap(), *c);
        }
        assert!(report
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_class_is_certain() {
        let data = vec![(vec![0.3, 1.0], "only"), (vec![-2.0, 0.5], "only")];
        let model = train(as_refs(&data), &TrainConfig::default()).unwrap();
        let p = model.predict_proba(&[100.0, -50.0]).unwrap();
        assert!(p.0[0] >= 1.0 - 1e-6);
    }

    #[test]
    fn duplicating_data_matches_doubled_strength() {
        // The penalty scales with 1/N, so duplicating every example is the
        // same objective as the original data with twice the strength.
        let data = one_d_separable();
        let doubled: Vec<_> = data.iter().chain(data.iter()).cloned().collect();
        let cfg = TrainConfig::default();
        let a = train(
            as_refs(&data),
            &TrainConfig {
                reg_strength: 2.0,
                ..cfg
            },
        )
        .unwrap();
        let b = train(as_refs(&doubled), &cfg).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.4, 1.7] {
            let pa = a.predict_proba(&[x]).unwrap();
            let pb = b.predict_proba(&[x]).unwrap();
            for (u, v) in pa.0.iter().zip(&pb.0) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn empty_training_set_errors() {
        let empty: Vec<(&[f64], &str)> = Vec::new();
        assert_eq!(
            train(empty, &TrainConfig::default()).unwrap_err(),
            ClassifierError::EmptyTrainingSet
        );
    }

    #[test]
    fn predict_proba_cases() {
        let zero = ClassifierModel::zeros(vec!["a".into(), "b".into(), "c".into()], 2, 1.0);
        for p in zero.predict_proba(&[1.0, 2.0]).unwrap().0 {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        let mut m = ClassifierModel::zeros(vec!["a".into(), "b".into()], 1, 1.0);
        m.weights = vec![0.0, 3f64.ln(), 0.0, 0.0];
        let p = m.predict_proba(&[0.0]).unwrap();
        assert_abs_diff_eq!(p.0[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p.0[1], 0.25, epsilon = 1e-12);
        let before = m.predict_proba(&[0.7]).unwrap();
        m.weights[1] += 5.0;
        m.weights[3] += 5.0;
        let after = m.predict_proba(&[0.7]).unwrap();
        for (x, y) in before.0.iter().zip(&after.0) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        m.weights = vec![1e300, 0.0, -1e300, 0.0];
        let extreme = m.predict_proba(&[1.0]).unwrap();
        assert!(extreme.0.iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(extreme.0.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(m.predict_proba(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn uncertainty_scores() {
        assert_abs_diff_eq!(entropy_score(&ProbVector(vec![0.25; 4])), 4f64.ln(), epsilon = 1e-15);
        assert_eq!(entropy_score(&ProbVector(vec![0.0, 1.0, 0.0])), 0.0);
        // mpmath, 40 digits
        assert_abs_diff_eq!(
            entropy_score(&ProbVector(vec![0.5, 0.25, 0.25])),
            1.039_720_770_839_917_964,
            epsilon = 1e-15
        );
        assert_eq!(least_confidence_score(&ProbVector(vec![0.0, 1.0])), -1.0);
        assert_abs_diff_eq!(least_confidence_score(&ProbVector(vec![0.2; 5])), -0.2, epsilon = 1e-15);
        assert_eq!(least_confidence_score(&ProbVector(vec![0.6, 0.3, 0.1])), -0.6);
    }

    #[test]
    fn argmax_stable_under_input_scaling() {
        let data = one_d_separable();
        let scaled: Vec<_> = data.iter().map(|(v, c)| (vec![v[0] * 3.0], *c)).collect();
        let cfg = TrainConfig::default();
        let a = train(as_refs(&data), &cfg).unwrap();
        let b = train(as_refs(&scaled), &cfg).unwrap();
        for ((v, _), (s, _)) in data.iter().zip(&scaled) {
            assert_eq!(a.predict(v).unwrap(), b.predict(s).unwrap());
        }
    }

    #[test]
    fn removing_a_class_renormalizes_the_rest() {
        let mut model = ClassifierModel {
            class_ids: vec!["a".into(), "b".into(), "c".into()],
            d: 1,
            weights: vec![1.0, 0.0, 0.0, 0.5, -1.0, 0.2],
            reg_strength: 1.0,
        };
        let full = model.predict_proba(&[0.7]).unwrap().0;
        assert!(model.remove_class("b"));
        assert!(!model.remove_class("b"));
        assert_eq!(model.class_ids, ["a", "c"]);
        let kept = model.predict_proba(&[0.7]).unwrap().0;
        let z = full[0] + full[2];
        assert_abs_diff_eq!(kept[0], full[0] / z, epsilon = 1e-12);
        assert_abs_diff_eq!(kept[1], full[2] / z, epsilon = 1e-12);
    }
}
