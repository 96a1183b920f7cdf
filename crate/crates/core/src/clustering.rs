//! Hard-EM clustering of authors under log-linear multinomials.
//!
//! Cluster `k` draws words from `p_k = softmax(m + beta_k)`, where `m` is
//! a fixed background (log of the add-0.5 smoothed corpus unigram
//! distribution) and `beta_k` a sparse deviation under an L1 penalty.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categories::{Category, CategoryRow};
use crate::corpus::{Author, Gender};
use crate::features::{featurize, FeatureMode, FeatureVector, Vocabulary};
use crate::rng::substream;
use crate::scalar::{compensated_sum, log_sum_exp};
use crate::network::SocialGraph;
use crate::stats::least_squares;
use crate::{Error, Real, Result};

/// Lower bound on a deviation when a word is absent from a cluster and the
/// penalty is zero (the unpenalized optimum is minus infinity).
const BETA_FLOOR: f64 = -50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct EmConfig<T: Real> {
    pub k: usize,
    pub restarts: usize,
    pub lambda_beta: T,
    pub max_iterations: usize,
    pub inner_iterations: usize,
    /// Relative objective improvement below which a restart stops.
    pub tolerance: T,
    /// Pseudo-count per cluster, as a fraction of `N / K`.
    pub theta_smoothing: T,
    pub seed: u64,
}

impl<T: Real> Default for EmConfig<T> {
    fn default() -> Self {
        EmConfig {
            k: 20,
            restarts: 25,
            lambda_beta: T::one(),
            max_iterations: 100,
            inner_iterations: 50,
            tolerance: T::c(1e-8),
            theta_smoothing: T::c(0.01),
            seed: 0,
        }
    }
}

impl<T: Real> EmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, message: &str| Error::Config {
            field: format!("clustering.{field}"),
            message: message.into(),
        };
        if self.k == 0 {
            return Err(err("k", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(err("restarts", "must be at least 1"));
        }
        if !(self.lambda_beta >= T::zero()) || !self.lambda_beta.is_finite() {
            return Err(err("lambda_beta", "must be finite and nonnegative"));
        }
        if !(self.tolerance >= T::zero()) {
            return Err(err("tolerance", "must be nonnegative"));
        }
        if !(self.theta_smoothing > T::zero()) {
            return Err(err("theta_smoothing", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClusterModel<T: Real> {
    pub k: usize,
    /// Background log-weights over the vocabulary.
    pub m: Vec<T>,
    /// Per-cluster deviations, `k x V`.
    pub beta: Vec<Vec<T>>,
    pub theta: Vec<T>,
    pub assignments: Vec<usize>,
    pub lambda_beta: T,
    pub objective: T,
    pub config: EmConfig<T>,
}

impl<T: Real> ClusterModel<T> {
    pub fn vocab_size(&self) -> usize {
        self.m.len()
    }

    /// `log p_k(w)` for every word.
    pub fn log_probs(&self, k: usize) -> Vec<T> {
        log_softmax_shifted(&self.m, &self.beta[k])
    }

    pub fn probs(&self, k: usize) -> Vec<T> {
        self.log_probs(k).into_iter().map(T::exp).collect()
    }

    /// `log softmax(m)`.
    pub fn background_log_probs(&self) -> Vec<T> {
        let zero = vec![T::zero(); self.m.len()];
        log_softmax_shifted(&self.m, &zero)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &z in &self.assignments {
            s[z] += 1;
        }
        s
    }

    pub fn beta_l1(&self, k: usize) -> T {
        self.beta[k].iter().fold(T::zero(), |a, b| a + b.abs())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn log_softmax_shifted<T: Real>(m: &[T], beta: &[T]) -> Vec<T> {
    let eta: Vec<T> = m.iter().zip(beta).map(|(&a, &b)| a + b).collect();
    let lz = log_sum_exp(&eta);
    eta.into_iter().map(|e| e - lz).collect()
}

/// `ln((count_w + 0.5) / (total + 0.5 V))` over word counts.
pub fn background_log_frequencies<T: Real>(counts: &[FeatureVector<T>], vocab_size: usize) -> Vec<T> {
    let mut c = vec![T::zero(); vocab_size];
    for x in counts {
        for &(w, v) in x.entries() {
            c[w] = c[w] + v;
        }
    }
    let half = T::c(0.5);
    let total = compensated_sum(c.iter().copied()) + half * T::from_count(vocab_size);
    c.into_iter().map(|x| ((x + half) / total).ln()).collect()
}

/// Keeps every author of the smaller gender and a seeded uniform sample of
/// the larger one, preserving input order.
pub fn balance_by_gender(authors: &[Author], seed: u64) -> Result<Vec<Author>> {
    let female: Vec<usize> = (0..authors.len()).filter(|&i| authors[i].gender == Gender::Female).collect();
    let male: Vec<usize> = (0..authors.len()).filter(|&i| authors[i].gender == Gender::Male).collect();
    if female.is_empty() || male.is_empty() {
        return Err(Error::invalid("balancing needs authors of both genders"));
    }
    let (minority, mut majority) = if female.len() <= male.len() {
        (female, male)
    } else {
        (male, female)
    };
    majority.shuffle(&mut substream(seed, "balance", 0));
    majority.truncate(minority.len());
    let mut keep: Vec<usize> = minority.into_iter().chain(majority).collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| authors[i].clone()).collect())
}

/// Sufficient statistics of one cluster.
struct ClusterStats<T> {
    members: usize,
    word_counts: Vec<T>,
    total: T,
}

fn cluster_stats<T: Real>(counts: &[FeatureVector<T>], z: &[usize], k: usize, v: usize) -> Vec<ClusterStats<T>> {
    let mut stats: Vec<ClusterStats<T>> = (0..k)
        .map(|_| ClusterStats {
            members: 0,
            word_counts: vec![T::zero(); v],
            total: T::zero(),
        })
        .collect();
    for (x, &c) in counts.iter().zip(z) {
        let s = &mut stats[c];
        s.members += 1;
        for &(w, val) in x.entries() {
            s.word_counts[w] = s.word_counts[w] + val;
        }
    }
    for s in &mut stats {
        s.total = compensated_sum(s.word_counts.iter().copied());
    }
    stats
}

/// Penalized log-likelihood of one cluster's words:
/// `sum_w C_w (m_w + beta_w) - C log Z(beta) - lambda |beta|_1`.
fn cluster_word_objective<T: Real>(m: &[T], beta: &[T], st: &ClusterStats<T>, lambda: T) -> T {
    let eta: Vec<T> = m.iter().zip(beta).map(|(&a, &b)| a + b).collect();
    let lz = log_sum_exp(&eta);
    let fit = compensated_sum(st.word_counts.iter().zip(&eta).map(|(&c, &e)| c * e));
    let l1 = compensated_sum(beta.iter().map(|b| b.abs()));
    fit - st.total * lz - lambda * l1
}

/// Majorize-minimize updates for one cluster's deviations. The bound
/// `log Z <= log Z0 + Z / Z0 - 1` makes the surrogate separable, and each
/// coordinate is then maximized in closed form by a soft threshold.
/// Steps that lower the objective are rejected.
fn fit_beta<T: Real>(m: &[T], st: &ClusterStats<T>, lambda: T, init: &[T], iters: usize) -> (Vec<T>, T) {
    if st.members == 0 || st.total <= T::zero() {
        let zero = vec![T::zero(); m.len()];
        let obj = cluster_word_objective(m, &zero, st, lambda);
        return (zero, obj);
    }
    let floor = T::c(BETA_FLOOR);
    let mut beta = init.to_vec();
    let mut obj = cluster_word_objective(m, &beta, st, lambda);
    for _ in 0..iters {
        let eta: Vec<T> = m.iter().zip(&beta).map(|(&a, &b)| a + b).collect();
        let lz0 = log_sum_exp(&eta);
        let next: Vec<T> = m
            .iter()
            .zip(&st.word_counts)
            .map(|(&mw, &cw)| {
                let a = st.total * (mw - lz0).exp();
                let b = if cw - a > lambda {
                    ((cw - lambda) / a).ln()
                } else if cw - a < -lambda {
                    let num = cw + lambda;
                    if num > T::zero() {
                        (num / a).ln()
                    } else {
                        floor
                    }
                } else {
                    T::zero()
                };
                b.max(floor)
            })
            .collect();
        let new_obj = cluster_word_objective(m, &next, st, lambda);
        if !(new_obj >= obj) {
            break;
        }
        let gain = new_obj - obj;
        beta = next;
        obj = new_obj;
        if gain <= T::c(1e-13) * obj.abs().max(T::one()) {
            break;
        }
    }
    (beta, obj)
}

fn smoothed_theta<T: Real>(sizes: &[usize], n: usize, smoothing: T) -> Vec<T> {
    let k = sizes.len();
    let pseudo = smoothing * T::from_count(n) / T::from_count(k);
    let denom = T::from_count(n) + pseudo * T::from_count(k);
    sizes.iter().map(|&s| (T::from_count(s) + pseudo) / denom).collect()
}

fn mle_theta_objective<T: Real>(sizes: &[usize], theta: &[T]) -> T {
    compensated_sum(sizes.iter().zip(theta).map(|(&s, &t)| T::from_count(s) * t.ln()))
}

/// Joint log-likelihood of counts and assignments minus the L1 penalty.
pub fn joint_objective<T: Real>(model: &ClusterModel<T>, counts: &[FeatureVector<T>]) -> Result<T> {
    if counts.len() != model.assignments.len() {
        return Err(Error::invalid("count vectors do not match the assignments"));
    }
    let lps: Vec<Vec<T>> = (0..model.k).map(|k| model.log_probs(k)).collect();
    let mut terms = Vec::with_capacity(counts.len() + model.k);
    for (x, &z) in counts.iter().zip(&model.assignments) {
        if let Some(m) = x.max_index() {
            if m >= model.vocab_size() {
                return Err(Error::DimensionMismatch {
                    index: m,
                    dim: model.vocab_size(),
                });
            }
        }
        terms.push(model.theta[z].ln() + x.dot(&lps[z]));
    }
    for k in 0..model.k {
        terms.push(-model.lambda_beta * model.beta_l1(k));
    }
    Ok(compensated_sum(terms))
}

fn e_step<T: Real>(counts: &[FeatureVector<T>], log_theta: &[T], lps: &[Vec<T>]) -> Vec<usize> {
    counts
        .par_iter()
        .map(|x| {
            let mut best = 0;
            let mut best_score = T::neg_infinity();
            for (k, lp) in lps.iter().enumerate() {
                let s = log_theta[k] + x.dot(lp);
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            best
        })
        .collect()
}

struct State<T> {
    z: Vec<usize>,
    beta: Vec<Vec<T>>,
    theta: Vec<T>,
    objective: T,
}

/// M-step for fixed assignments, starting from `prev` parameters.
fn m_step<T: Real>(
    counts: &[FeatureVector<T>],
    m: &[T],
    z: Vec<usize>,
    prev_beta: &[Vec<T>],
    prev_theta: &[T],
    cfg: &EmConfig<T>,
) -> State<T> {
    let v = m.len();
    let stats = cluster_stats(counts, &z, cfg.k, v);
    let fitted: Vec<(Vec<T>, T)> = stats
        .par_iter()
        .zip(prev_beta.par_iter())
        .map(|(st, b0)| fit_beta(m, st, cfg.lambda_beta, b0, cfg.inner_iterations))
        .collect();
    let sizes: Vec<usize> = stats.iter().map(|s| s.members).collect();
    let candidate = smoothed_theta(&sizes, counts.len(), cfg.theta_smoothing);
    let theta = if mle_theta_objective(&sizes, &candidate) >= mle_theta_objective(&sizes, prev_theta) {
        candidate
    } else {
        prev_theta.to_vec()
    };
    let word_obj = compensated_sum(fitted.iter().map(|f| f.1));
    let objective = word_obj + mle_theta_objective(&sizes, &theta);
    State {
        z,
        beta: fitted.into_iter().map(|f| f.0).collect(),
        theta,
        objective,
    }
}

/// One restart's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace<T> {
    /// Objective after initialization and after every accepted iteration.
    pub objective: Vec<T>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFit<T: Real> {
    pub model: ClusterModel<T>,
    pub best_restart: usize,
    pub traces: Vec<RestartTrace<T>>,
}

fn run_restart<T: Real>(
    counts: &[FeatureVector<T>],
    m: &[T],
    cfg: &EmConfig<T>,
    restart: usize,
) -> (State<T>, RestartTrace<T>) {
    let mut rng = substream(cfg.seed, "em-restart", restart as u64);
    let z0: Vec<usize> = (0..counts.len()).map(|_| rng.random_range(0..cfg.k)).collect();
    let v = m.len();
    let zero_beta = vec![vec![T::zero(); v]; cfg.k];
    let uniform = vec![T::one() / T::from_count(cfg.k); cfg.k];
    let mut state = m_step(counts, m, z0, &zero_beta, &uniform, cfg);
    let mut trace = vec![state.objective];
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let lps: Vec<Vec<T>> = state.beta.iter().map(|b| log_softmax_shifted(m, b)).collect();
        let log_theta: Vec<T> = state.theta.iter().map(|t| t.ln()).collect();
        let z = e_step(counts, &log_theta, &lps);
        let unchanged = z == state.z;
        let next = m_step(counts, m, z, &state.beta, &state.theta, cfg);
        if !(next.objective >= state.objective) {
            // Rounding can make an exact ascent step look like a descent;
            // keep the previous parameters.
            break;
        }
        let gain = next.objective - state.objective;
        state = next;
        trace.push(state.objective);
        iterations += 1;
        if unchanged && gain <= cfg.tolerance * state.objective.abs().max(T::one()) {
            break;
        }
    }
    (
        state,
        RestartTrace {
            objective: trace,
            iterations,
        },
    )
}

/// Hard EM with random restarts; returns the restart with the highest
/// final objective (lowest index on ties).
pub fn fit_clusters<T: Real>(counts: &[FeatureVector<T>], vocab_size: usize, cfg: &EmConfig<T>) -> Result<ClusterFit<T>> {
    cfg.validate()?;
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for (i, x) in counts.iter().enumerate() {
        if let Some(m) = x.max_index() {
            if m >= vocab_size {
                return Err(Error::DimensionMismatch { index: m, dim: vocab_size });
            }
        }
        if x.entries().iter().any(|e| !e.1.is_finite() || e.1 < T::zero()) {
            return Err(Error::NonFinite { example: i });
        }
    }
    let m = background_log_frequencies(counts, vocab_size);
    let runs: Vec<(State<T>, RestartTrace<T>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(counts, &m, cfg, r))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.0.objective > runs[best].0.objective {
            best = r;
        }
    }
    let mut traces = Vec::with_capacity(runs.len());
    let mut chosen = None;
    for (r, (state, trace)) in runs.into_iter().enumerate() {
        traces.push(trace);
        if r == best {
            chosen = Some(state);
        }
    }
    let state = chosen.expect("at least one restart");
    log::info!("best restart {best} with objective {}", state.objective);
    Ok(ClusterFit {
        model: ClusterModel {
            k: cfg.k,
            m,
            beta: state.beta,
            theta: state.theta,
            assignments: state.z,
            lambda_beta: cfg.lambda_beta,
            objective: state.objective,
            config: cfg.clone(),
        },
        best_restart: best,
        traces,
    })
}

/// Count-mode features for every author.
pub fn count_vectors<T: Real>(authors: &[Author], vocab: &Vocabulary) -> Vec<FeatureVector<T>> {
    authors
        .par_iter()
        .map(|a| featurize(&a.tokens, vocab, FeatureMode::Count, None))
        .collect()
}

/// Words with the highest `log p_k(w) - log p_0(w)`, ties broken
/// lexicographically.
pub fn cluster_top_words<T: Real>(model: &ClusterModel<T>, vocab: &Vocabulary, k: usize, n: usize) -> Result<Vec<(String, T)>> {
    if k >= model.k {
        return Err(Error::invalid(format!("cluster {k} out of range (K = {})", model.k)));
    }
    if vocab.len() != model.vocab_size() {
        return Err(Error::invalid("vocabulary does not match the model"));
    }
    let lp = model.log_probs(k);
    let l0 = model.background_log_probs();
    let mut scored: Vec<(String, T)> = vocab
        .terms()
        .iter()
        .zip(lp.iter().zip(&l0))
        .map(|(t, (&a, &b))| (t.clone(), a - b))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(n);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cluster: usize,
    pub size: usize,
    pub female: usize,
    pub pct_female: f64,
    /// Gendered neighbors summed over members.
    pub friends: usize,
    pub pct_female_friends: f64,
    pub pct_male_friends: f64,
    pub categories: Option<CategoryRow>,
    pub top_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    /// Clusters of at least `min_size` members, by `%female` descending.
    pub rows: Vec<ClusterRow>,
    /// Least-squares `(slope, intercept)` of `%male friends` on
    /// `%male authors` across the reported clusters.
    pub trend: Option<(f64, f64)>,
}

pub struct CompositionInputs<'a> {
    pub authors: &'a [Author],
    pub vocab: &'a Vocabulary,
    pub graph: &'a SocialGraph,
    pub genders: &'a HashMap<String, Gender>,
    /// Category of each vocabulary term; shares are skipped when absent.
    pub categories: Option<&'a [Category]>,
    pub min_size: usize,
    pub top_words: usize,
}

pub fn cluster_composition_report<T: Real>(model: &ClusterModel<T>, inp: &CompositionInputs<'_>) -> Result<CompositionReport> {
    if inp.authors.len() != model.assignments.len() {
        return Err(Error::invalid("author list does not match the model"));
    }
    let cat_report = match inp.categories {
        Some(cats) => {
            let names: Vec<String> = (0..model.k).map(|k| k.to_string()).collect();
            Some(crate::categories::category_report(
                inp.authors,
                inp.vocab,
                cats,
                &model.assignments,
                &names,
            )?)
        }
        None => None,
    };
    let mut rows = Vec::new();
    for k in 0..model.k {
        let members: Vec<&Author> = inp
            .authors
            .iter()
            .zip(&model.assignments)
            .filter(|(_, &z)| z == k)
            .map(|(a, _)| a)
            .collect();
        if members.len() < inp.min_size || members.is_empty() {
            continue;
        }
        let female = members.iter().filter(|a| a.gender == Gender::Female).count();
        let (mut ff, mut fm) = (0usize, 0usize);
        for a in &members {
            if let Some(ns) = inp.graph.neighbors(&a.author_id) {
                for n in ns {
                    match inp.genders.get(n) {
                        Some(Gender::Female) => ff += 1,
                        Some(Gender::Male) => fm += 1,
                        _ => {}
                    }
                }
            }
        }
        let friends = ff + fm;
        let pct = |a: usize, b: usize| if b == 0 { f64::NAN } else { 100.0 * a as f64 / b as f64 };
        let top = cluster_top_words(model, inp.vocab, k, inp.top_words)?
            .into_iter()
            .map(|(t, _)| t)
            .collect();
        rows.push(ClusterRow {
            cluster: k,
            size: members.len(),
            female,
            pct_female: pct(female, members.len()),
            friends,
            pct_female_friends: pct(ff, friends),
            pct_male_friends: pct(fm, friends),
            categories: cat_report.as_ref().and_then(|r| r.row(&k.to_string()).cloned()),
            top_words: top,
        });
    }
    rows.sort_by(|a, b| {
        b.pct_female
            .partial_cmp(&a.pct_female)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cluster.cmp(&b.cluster))
    });
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.friends > 0)
        .map(|r| (100.0 - r.pct_female, r.pct_male_friends))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let trend = least_squares(&xs, &ys).ok();
    Ok(CompositionReport { rows, trend })
}

impl CompositionReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "cluster",
            "size",
            "pct_female",
            "friends",
            "pct_female_friends",
            "pct_male_friends",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(Category::ORDERED.iter().map(|c| c.as_str().to_string()));
        header.push("top_words".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.cluster.to_string(),
                r.size.to_string(),
                format!("{}", r.pct_female),
                r.friends.to_string(),
                format!("{}", r.pct_female_friends),
                format!("{}", r.pct_male_friends),
            ];
            match &r.categories {
                Some(c) => rec.extend(c.shares.iter().map(|s| format!("{s}"))),
                None => rec.extend(std::iter::repeat_n(String::new(), 8)),
            }
            rec.push(r.top_words.join(" "));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
