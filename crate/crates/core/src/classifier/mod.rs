//! L2-regularized logistic regression for binary author attributes.
//!
//! Labels are `+1` / `-1` (female / male, see [`Gender::label`]). The model
//! maximizes `sum_i log P(y_i | x_i; w) - lambda * |w|^2` with an
//! unregularized bias stored in the last weight position.

mod lbfgs;

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Author, Gender};
use crate::features::{featurize, FeatureMode, FeatureVector, Vocabulary};
use crate::network::{network_composition, SocialGraph};
use crate::rng::substream;
use crate::{Error, Real, Result};

/// Number of appended network features.
pub const NETWORK_FEATURES: usize = 3;

const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct TrainConfig<T: Real> {
    pub lambda_grid: Vec<T>,
    pub max_iterations: usize,
    pub tolerance: T,
    pub folds: usize,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            lambda_grid: [0.01, 0.1, 1.0, 10.0, 100.0].iter().map(|&l| T::c(l)).collect(),
            max_iterations: 500,
            tolerance: T::c(1e-6),
            folds: 10,
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |field: &str, message: &str| Error::Config {
            field: format!("classifier.{field}"),
            message: message.into(),
        };
        if self.lambda_grid.is_empty() {
            return Err(cfg_err("lambda_grid", "must be nonempty"));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= T::zero()) || !l.is_finite()) {
            return Err(cfg_err("lambda_grid", "entries must be finite and nonnegative"));
        }
        if !(self.tolerance > T::zero()) {
            return Err(cfg_err("tolerance", "must be positive"));
        }
        if self.folds < 3 {
            return Err(cfg_err("folds", "need at least 3 folds (train/dev/test)"));
        }
        Ok(())
    }
}

/// Labeled examples over a fixed feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub features: Vec<FeatureVector<T>>,
    pub labels: Vec<i8>,
    pub vocab_size: usize,
    pub network_feature_count: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        features: Vec<FeatureVector<T>>,
        labels: Vec<i8>,
        vocab_size: usize,
        network_feature_count: usize,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature vectors but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = vocab_size + network_feature_count;
        for (i, (x, &y)) in features.iter().zip(&labels).enumerate() {
            if y != 1 && y != -1 {
                return Err(Error::invalid(format!("label {y} at example {i} is not +1 or -1")));
            }
            if let Some(m) = x.max_index() {
                if m >= dim {
                    return Err(Error::DimensionMismatch { index: m, dim });
                }
            }
            if x.entries().iter().any(|e| !e.1.is_finite()) {
                return Err(Error::NonFinite { example: i });
            }
        }
        Ok(Dataset {
            features,
            labels,
            vocab_size,
            network_feature_count,
        })
    }

    /// Boolean text features with labels taken from author gender.
    pub fn from_authors(authors: &[Author], vocab: &Vocabulary, token_budget: Option<usize>) -> Result<Self> {
        let labels = author_labels(authors)?;
        let features = authors
            .par_iter()
            .map(|a| featurize(&a.tokens, vocab, FeatureMode::Boolean, token_budget))
            .collect();
        Dataset::new(features, labels, vocab.len(), 0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vocab_size + self.network_feature_count
    }
}

fn author_labels(authors: &[Author]) -> Result<Vec<i8>> {
    authors
        .iter()
        .map(|a| {
            a.gender
                .label()
                .ok_or_else(|| Error::invalid(format!("author {} has unknown gender", a.author_id)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LogRegModel<T: Real> {
    pub lambda: T,
    pub vocab_size: usize,
    pub network_feature_count: usize,
    /// Feature dimension, excluding the bias.
    pub dimension: usize,
    /// Feature weights followed by the bias.
    pub weights: Vec<T>,
}

impl<T: Real> LogRegModel<T> {
    pub fn zeros(vocab_size: usize, network_feature_count: usize, lambda: T) -> Self {
        let dimension = vocab_size + network_feature_count;
        LogRegModel {
            lambda,
            vocab_size,
            network_feature_count,
            dimension,
            weights: vec![T::zero(); dimension + 1],
        }
    }

    pub fn bias(&self) -> T {
        self.weights[self.dimension]
    }

    /// Euclidean norm of the feature weights (bias excluded).
    pub fn weight_norm(&self) -> T {
        self.weights[..self.dimension]
            .iter()
            .fold(T::zero(), |a, &w| a + w * w)
            .sqrt()
    }

    pub fn margin(&self, x: &FeatureVector<T>) -> Result<T> {
        if let Some(m) = x.max_index() {
            if m >= self.dimension {
                return Err(Error::DimensionMismatch {
                    index: m,
                    dim: self.dimension,
                });
            }
        }
        Ok(x.dot(&self.weights) + self.bias())
    }

    /// `P(y = +1 | x)`.
    pub fn predict_proba(&self, x: &FeatureVector<T>) -> Result<T> {
        Ok(sigmoid(self.margin(x)?))
    }

    /// Predicted label; a margin of exactly zero predicts `+1`.
    pub fn predict(&self, x: &FeatureVector<T>) -> Result<i8> {
        Ok(if self.margin(x)? >= T::zero() { 1 } else { -1 })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LogRegModel<T> = serde_json::from_str(s)?;
        if m.dimension != m.vocab_size + m.network_feature_count || m.weights.len() != m.dimension + 1 {
            return Err(Error::invalid("model dimensions are inconsistent"));
        }
        if m.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("model has non-finite weights"));
        }
        Ok(m)
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log sigmoid(t)`, stable for large `|t|`.
fn log_sigmoid<T: Real>(t: T) -> T {
    if t > T::zero() {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

fn softplus<T: Real>(u: T) -> T {
    -log_sigmoid(-u)
}

/// `softplus(v + d) - softplus(v)` without cancellation.
fn softplus_diff<T: Real>(v: T, d: T) -> T {
    if d.abs() < T::c(30.0) {
        (sigmoid(v) * d.exp_m1()).ln_1p()
    } else {
        softplus(v + d) - softplus(v)
    }
}

/// `f(w_new) - f(w_old)` for the penalized log-likelihood, computed from the
/// step so that small changes are resolved accurately.
fn objective_delta<T: Real>(data: &Dataset<T>, idx: &[usize], w_old: &[T], w_new: &[T], lambda: T) -> T {
    let dim = data.dimension();
    let step: Vec<T> = w_new.iter().zip(w_old).map(|(&a, &b)| a - b).collect();
    let partials: Vec<T> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = T::zero();
            for &i in chunk {
                let x = &data.features[i];
                let y = T::c(f64::from(data.labels[i]));
                let z = x.dot(w_old) + w_old[dim];
                let dz = x.dot(&step) + step[dim];
                // log sigmoid(y z) = -softplus(-y z)
                acc = acc - softplus_diff(-y * z, -y * dz);
            }
            acc
        })
        .collect();
    let ll: T = crate::scalar::compensated_sum(partials);
    let mut pen = T::zero();
    for j in 0..dim {
        pen = pen + step[j] * (w_old[j] + w_old[j] + step[j]);
    }
    ll - lambda * pen
}

struct Penalized<'a, T: Real> {
    data: &'a Dataset<T>,
    idx: &'a [usize],
    lambda: T,
}

impl<T: Real> lbfgs::Objective<T> for Penalized<'_, T> {
    fn eval(&mut self, x: &[T]) -> (T, Vec<T>) {
        objective_on(self.data, self.idx, x, self.lambda)
    }

    fn delta(&mut self, from: &[T], to: &[T]) -> T {
        objective_delta(self.data, self.idx, from, to, self.lambda)
    }
}

/// Penalized log-likelihood and its gradient over the examples in `idx`.
///
/// Partial sums are computed over fixed-size chunks and combined in chunk
/// order, so the result does not depend on the thread count.
fn objective_on<T: Real>(data: &Dataset<T>, idx: &[usize], w: &[T], lambda: T) -> (T, Vec<T>) {
    let dim = data.dimension();
    let partials: Vec<(T, Vec<T>)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ll = T::zero();
            let mut g = vec![T::zero(); dim + 1];
            for &i in chunk {
                let x = &data.features[i];
                let y = T::c(f64::from(data.labels[i]));
                let z = x.dot(w) + w[dim];
                ll = ll + log_sigmoid(y * z);
                let r = y * sigmoid(-y * z);
                for &(j, v) in x.entries() {
                    g[j] = g[j] + r * v;
                }
                g[dim] = g[dim] + r;
            }
            (ll, g)
        })
        .collect();
    let mut ll = T::zero();
    let mut grad = vec![T::zero(); dim + 1];
    for (l, g) in partials {
        ll = ll + l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + b;
        }
    }
    let two = T::c(2.0);
    let mut penalty = T::zero();
    for j in 0..dim {
        penalty = penalty + w[j] * w[j];
        grad[j] = grad[j] - two * lambda * w[j];
    }
    (ll - lambda * penalty, grad)
}

/// Penalized log-likelihood and gradient at `weights` (features then bias).
pub fn objective_and_gradient<T: Real>(data: &Dataset<T>, weights: &[T], lambda: T) -> Result<(T, Vec<T>)> {
    if weights.len() != data.dimension() + 1 {
        return Err(Error::invalid(format!(
            "weight vector has length {}, expected {}",
            weights.len(),
            data.dimension() + 1
        )));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(objective_on(data, &idx, weights, lambda))
}

/// Optimizer diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace<T> {
    /// Objective at the start and after every accepted step.
    pub objective: Vec<T>,
    pub gradient_norm: T,
    pub iterations: usize,
}

fn fit<T: Real>(
    data: &Dataset<T>,
    idx: &[usize],
    lambda: T,
    cfg: &TrainConfig<T>,
    warm: Option<&[T]>,
) -> Result<(LogRegModel<T>, TrainTrace<T>)> {
    let has_pos = idx.iter().any(|&i| data.labels[i] > 0);
    let has_neg = idx.iter().any(|&i| data.labels[i] < 0);
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite and nonnegative"));
    }
    let mut model = LogRegModel::zeros(data.vocab_size, data.network_feature_count, lambda);
    if let Some(w0) = warm {
        model.weights.copy_from_slice(w0);
    }
    let opts = lbfgs::LbfgsOptions {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        memory: 10,
    };
    let r = lbfgs::maximize(
        &mut Penalized { data, idx, lambda },
        std::mem::take(&mut model.weights),
        &opts,
    );
    if r.grad_norm > cfg.tolerance {
        log::debug!(
            "logistic regression stopped after {} iterations with gradient norm {}",
            r.iterations,
            r.grad_norm
        );
    }
    model.weights = r.x;
    Ok((
        model,
        TrainTrace {
            objective: r.trace,
            gradient_norm: r.grad_norm,
            iterations: r.iterations,
        },
    ))
}

pub fn train<T: Real>(data: &Dataset<T>, lambda: T, cfg: &TrainConfig<T>) -> Result<LogRegModel<T>> {
    train_traced(data, lambda, cfg).map(|r| r.0)
}

pub fn train_traced<T: Real>(
    data: &Dataset<T>,
    lambda: T,
    cfg: &TrainConfig<T>,
) -> Result<(LogRegModel<T>, TrainTrace<T>)> {
    let idx: Vec<usize> = (0..data.len()).collect();
    fit(data, &idx, lambda, cfg, None)
}

/// Seeded fold id per example; fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "cv-folds", 0));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CvReport<T: Real> {
    pub fold_accuracies: Vec<T>,
    pub mean_accuracy: T,
    /// Correct held-out predictions over all examples.
    pub pooled_accuracy: T,
    pub chosen_lambdas: Vec<T>,
    /// Fold in which each example was held out.
    pub fold: Vec<usize>,
    /// Held-out `P(y = +1 | x)` per example.
    pub p_positive: Vec<T>,
    /// Held-out probability of each example's own label.
    pub p_own: Vec<T>,
    pub correct: Vec<bool>,
}

impl<T: Real> CvReport<T> {
    /// CSV with one row per author: `author_id,true_gender,p_own_gender,fold`.
    pub fn write_csv<W: Write>(&self, out: W, authors: &[Author]) -> Result<()> {
        if authors.len() != self.p_own.len() {
            return Err(Error::invalid("author list does not match the report"));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["author_id", "true_gender", "p_own_gender", "fold"])?;
        for (i, a) in authors.iter().enumerate() {
            w.write_record([
                a.author_id.clone(),
                a.gender.to_string(),
                format!("{}", self.p_own[i]),
                self.fold[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// k-fold cross-validation. For fold `f`, fold `f` is the test set, fold
/// `(f + 1) % k` the development set and the rest the training set. The
/// lambda with the best development accuracy (smallest on ties) is used on
/// the test fold.
pub fn cross_validate<T: Real>(data: &Dataset<T>, cfg: &TrainConfig<T>) -> Result<CvReport<T>> {
    let fold = fold_assignment(data.len(), cfg.folds, cfg.seed);
    cross_validate_with_folds(data, cfg, &fold)
}

pub fn cross_validate_with_folds<T: Real>(
    data: &Dataset<T>,
    cfg: &TrainConfig<T>,
    fold: &[usize],
) -> Result<CvReport<T>> {
    cfg.validate()?;
    let k = cfg.folds;
    if data.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: data.len(),
        });
    }
    if fold.len() != data.len() || fold.iter().any(|&f| f >= k) {
        return Err(Error::invalid("fold assignment does not match the data"));
    }
    // Large lambdas first so each fit warm-starts from a smoother solution.
    let mut grid = cfg.lambda_grid.clone();
    grid.sort_by(|a, b| b.partial_cmp(a).expect("finite lambdas"));
    grid.dedup();

    let n = data.len();
    let mut p_positive = vec![T::zero(); n];
    let mut fold_accuracies = Vec::with_capacity(k);
    let mut chosen_lambdas = Vec::with_capacity(k);
    for f in 0..k {
        let dev_fold = (f + 1) % k;
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let dev: Vec<usize> = (0..n).filter(|&i| fold[i] == dev_fold).collect();
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold[i] != f && fold[i] != dev_fold).collect();

        let mut best: Option<(usize, T, LogRegModel<T>)> = None;
        let mut warm: Option<Vec<T>> = None;
        for &lambda in &grid {
            let (model, _) = fit(data, &train_idx, lambda, cfg, warm.as_deref())?;
            let dev_correct = count_correct(&model, data, &dev)?;
            // Grid is descending, so `>=` keeps the smallest lambda on ties.
            if best.as_ref().is_none_or(|b| dev_correct >= b.0) {
                best = Some((dev_correct, lambda, model.clone()));
            }
            warm = Some(model.weights);
        }
        let (_, lambda, model) = best.expect("nonempty grid");
        let mut correct = 0usize;
        for &i in &test {
            let z = model.margin(&data.features[i])?;
            p_positive[i] = sigmoid(z);
            let pred = if z >= T::zero() { 1 } else { -1 };
            if pred == data.labels[i] {
                correct += 1;
            }
        }
        fold_accuracies.push(if test.is_empty() {
            T::zero()
        } else {
            T::from_count(correct) / T::from_count(test.len())
        });
        chosen_lambdas.push(lambda);
    }
    let mut correct_flags = Vec::with_capacity(n);
    let mut p_own = Vec::with_capacity(n);
    for (&p, &label) in p_positive.iter().zip(&data.labels) {
        let own = if label > 0 { p } else { T::one() - p };
        p_own.push(own);
        let pred = if p >= T::c(0.5) { 1 } else { -1 };
        correct_flags.push(pred == label);
    }
    let pooled = T::from_count(correct_flags.iter().filter(|&&c| c).count()) / T::from_count(n);
    let mean = fold_accuracies.iter().copied().sum::<T>() / T::from_count(k);
    Ok(CvReport {
        fold_accuracies,
        mean_accuracy: mean,
        pooled_accuracy: pooled,
        chosen_lambdas,
        fold: fold.to_vec(),
        p_positive,
        p_own,
        correct: correct_flags,
    })
}

fn count_correct<T: Real>(model: &LogRegModel<T>, data: &Dataset<T>, idx: &[usize]) -> Result<usize> {
    let mut c = 0;
    for &i in idx {
        if model.predict(&data.features[i])? == data.labels[i] {
            c += 1;
        }
    }
    Ok(c)
}

/// `(proportion male friends, proportion female friends, ln(1 + friends))`.
pub fn network_features<T: Real>(
    author_id: &str,
    graph: &SocialGraph,
    genders: &HashMap<String, Gender>,
) -> Result<[T; NETWORK_FEATURES]> {
    let c = network_composition(author_id, graph, genders)?;
    let m = T::from_count(c.friends);
    Ok([
        T::from_count(c.male) / m,
        T::from_count(c.female) / m,
        m.ln_1p(),
    ])
}

/// Copy of `x` with the three network features appended after the
/// `vocab_size` text features.
pub fn augment_with_network_features<T: Real>(
    x: &FeatureVector<T>,
    vocab_size: usize,
    author_id: &str,
    graph: &SocialGraph,
    genders: &HashMap<String, Gender>,
) -> Result<FeatureVector<T>> {
    if let Some(m) = x.max_index() {
        if m >= vocab_size {
            return Err(Error::DimensionMismatch { index: m, dim: vocab_size });
        }
    }
    let extra = network_features::<T>(author_id, graph, genders)?;
    let mut out = x.clone();
    out.append_dense(vocab_size, &extra);
    Ok(out)
}

/// Adds the network features to every example of a text-only dataset.
pub fn fuse_network<T: Real>(
    data: &Dataset<T>,
    authors: &[Author],
    graph: &SocialGraph,
    genders: &HashMap<String, Gender>,
) -> Result<Dataset<T>> {
    if data.network_feature_count != 0 {
        return Err(Error::invalid("dataset already has network features"));
    }
    if authors.len() != data.len() {
        return Err(Error::invalid("author list does not match the dataset"));
    }
    let features = data
        .features
        .iter()
        .zip(authors)
        .map(|(x, a)| augment_with_network_features(x, data.vocab_size, &a.author_id, graph, genders))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(features, data.labels.clone(), data.vocab_size, NETWORK_FEATURES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CurvePoint<T: Real> {
    pub budget: usize,
    pub accuracy_text: T,
    pub accuracy_network: T,
}

/// Pooled cross-validated accuracy with and without network features, per
/// token budget. All budgets share one fold assignment.
pub fn token_budget_curve<T: Real>(
    authors: &[Author],
    vocab: &Vocabulary,
    graph: &SocialGraph,
    genders: &HashMap<String, Gender>,
    budgets: &[usize],
    cfg: &TrainConfig<T>,
) -> Result<Vec<CurvePoint<T>>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("budgets must be sorted ascending"));
    }
    cfg.validate()?;
    let fold = fold_assignment(authors.len(), cfg.folds, cfg.seed);
    let mut out = Vec::with_capacity(budgets.len());
    for &b in budgets {
        let text = Dataset::from_authors(authors, vocab, Some(b))?;
        let fused = fuse_network(&text, authors, graph, genders)?;
        let rt = cross_validate_with_folds(&text, cfg, &fold)?;
        let rn = cross_validate_with_folds(&fused, cfg, &fold)?;
        log::info!(
            "budget {b}: text {:.4}, network {:.4}",
            rt.pooled_accuracy,
            rn.pooled_accuracy
        );
        out.push(CurvePoint {
            budget: b,
            accuracy_text: rt.pooled_accuracy,
            accuracy_network: rn.pooled_accuracy,
        });
    }
    Ok(out)
}

pub fn write_curve_csv<T: Real, W: Write>(out: W, points: &[CurvePoint<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["budget", "accuracy_text", "accuracy_network", "network_gain"])?;
    for p in points {
        w.write_record([
            p.budget.to_string(),
            format!("{}", p.accuracy_text),
            format!("{}", p.accuracy_network),
            format!("{}", p.accuracy_network - p.accuracy_text),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
