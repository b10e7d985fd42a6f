//! Φ/Θ storage and the regularized EM algorithm.
//!
//! Each EM iteration evaluates every regularizer at the current (Φ, Θ),
//! streams the E-step over documents while accumulating `n_wt` and `n_td`,
//! and then sets
//!
//! ```text
//! φ_wt = norm_w(n_wt + φ_wt ∂R/∂φ_wt)      θ_td = norm_t(n_td + θ_td ∂R/∂θ_td)
//! ```
//!
//! where `norm` clamps negative entries to zero before dividing by the sum. A
//! column whose clamped sum is zero becomes a degenerate (all-zero) topic and
//! stays zero from then on.

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document};
use crate::regularizers::Regularizer;
use crate::scalar::Scalar;

/// Floor substituted for `p(w|d) = 0` inside the logarithm of the likelihood.
pub const LN_FLOOR: f64 = 1e-37;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("regularizer `{0}` produced a non-finite additive")]
    NonFiniteAdditive(String),
    #[error("phi has no nonzero column")]
    ZeroPhi,
    #[error("invalid model shape: {0}")]
    InvalidShape(String),
    #[error("corpus contains no tokens")]
    NoTokens,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum TopicRole {
    Domain,
    Background,
    /// Held to a banked good topic.
    Fixed { bank_ref: String },
}

impl TopicRole {
    pub fn is_background(&self) -> bool {
        matches!(self, TopicRole::Background)
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, TopicRole::Fixed { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel<S> {
    /// W × T, column `t` is `p(w | t)`.
    pub phi: Array2<S>,
    /// T × D, column `d` is `p(t | d)`.
    pub theta: Array2<S>,
    pub roles: Vec<TopicRole>,
    pub seed: u64,
    /// `n_t = Σ_d θ_td n_d`, refreshed after fitting.
    pub topic_sizes: Vec<S>,
}

impl<S: Scalar> TopicModel<S> {
    pub fn num_tokens(&self) -> usize {
        self.phi.nrows()
    }

    pub fn num_topics(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_documents(&self) -> usize {
        self.theta.ncols()
    }

    pub fn is_degenerate(&self, topic: usize) -> bool {
        self.phi.column(topic).iter().all(|&v| v == S::zero())
    }

    pub fn degenerate_topics(&self) -> Vec<usize> {
        (0..self.num_topics()).filter(|&t| self.is_degenerate(t)).collect()
    }

    /// Topics that are neither background nor fixed.
    pub fn free_topics(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r, TopicRole::Domain))
            .map(|(t, _)| t)
            .collect()
    }

    /// Non-background topics, the ones quality metrics are reported over.
    pub fn subject_topics(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_background())
            .map(|(t, _)| t)
            .collect()
    }

    pub fn topic_names(&self) -> Vec<String> {
        self.roles
            .iter()
            .enumerate()
            .map(|(t, role)| match role {
                TopicRole::Domain => format!("topic_{t}"),
                TopicRole::Background => format!("background_{t}"),
                TopicRole::Fixed { .. } => format!("fixed_{t}"),
            })
            .collect()
    }

    pub fn recompute_topic_sizes(&mut self, corpus: &Corpus) {
        self.topic_sizes = topic_sizes(&self.theta, corpus);
    }

    pub fn log_likelihood(&self, corpus: &Corpus) -> Result<f64, ModelError> {
        log_likelihood(&self.phi, &self.theta, corpus)
    }
}

pub fn topic_sizes<S: Scalar>(theta: &Array2<S>, corpus: &Corpus) -> Vec<S> {
    let mut sizes = vec![S::zero(); theta.nrows()];
    for (d, doc) in corpus.documents().iter().enumerate() {
        let n_d = S::of_count(doc.len());
        for (t, size) in sizes.iter_mut().enumerate() {
            *size = *size + theta[[t, d]] * n_d;
        }
    }
    sizes
}

/// Clamps negative entries to zero and divides by the sum.
///
/// Returns the normalized vector and `true` when the clamped sum is zero, in
/// which case the vector is all zeros.
pub fn normalize_column<S: Scalar>(values: &[S]) -> (Vec<S>, bool) {
    let mut out: Vec<S> = values.iter().map(|&v| v.max(S::zero())).collect();
    let degenerate = normalize_in_place(&mut out);
    (out, degenerate)
}

fn normalize_in_place<S: Scalar>(values: &mut [S]) -> bool {
    let sum: S = values.iter().copied().sum();
    if sum > S::zero() {
        for v in values.iter_mut() {
            *v = *v / sum;
        }
        false
    } else {
        values.iter_mut().for_each(|v| *v = S::zero());
        true
    }
}

/// Clamps and normalizes each column of `m` in place; returns per-column degeneracy flags.
pub fn normalize_columns<S: Scalar>(m: &mut Array2<S>) -> Vec<bool> {
    m.mapv_inplace(|v| v.max(S::zero()));
    let sums: Vec<S> = m.axis_iter(Axis(1)).map(|c| c.iter().copied().sum()).collect();
    for mut row in m.axis_iter_mut(Axis(0)) {
        for (v, &s) in row.iter_mut().zip(&sums) {
            *v = if s > S::zero() { *v / s } else { S::zero() };
        }
    }
    sums.iter().map(|&s| !(s > S::zero())).collect()
}

/// Checks that every column sums to one within `tol` or is entirely zero, and
/// that all entries are finite and nonnegative. Returns the offending column.
pub fn check_column_stochastic<S: Scalar>(m: &Array2<S>, tol: f64) -> Result<(), usize> {
    for (t, col) in m.axis_iter(Axis(1)).enumerate() {
        if col.iter().any(|v| !v.is_finite() || *v < S::zero()) {
            return Err(t);
        }
        let sum: f64 = col.iter().map(|v| v.as_f64()).sum();
        if sum != 0.0 && (sum - 1.0).abs() > tol {
            return Err(t);
        }
    }
    Ok(())
}

/// Random Φ with normalized columns from a ChaCha stream seeded by `seed`,
/// uniform Θ. `roles` may be empty, meaning every topic is a domain topic.
pub fn init_model<S: Scalar>(
    num_tokens: usize,
    num_topics: usize,
    num_documents: usize,
    seed: u64,
    roles: Vec<TopicRole>,
) -> Result<TopicModel<S>, ModelError> {
    if num_tokens == 0 || num_topics == 0 {
        return Err(ModelError::InvalidShape(format!("W={num_tokens}, T={num_topics}")));
    }
    let roles = if roles.is_empty() { vec![TopicRole::Domain; num_topics] } else { roles };
    if roles.len() != num_topics {
        return Err(ModelError::InvalidShape(format!(
            "{} roles for {num_topics} topics",
            roles.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = Array2::zeros((num_tokens, num_topics));
    for t in 0..num_topics {
        for w in 0..num_tokens {
            // strictly positive so that no topic starts degenerate
            phi[[w, t]] = S::of(rng.random::<f64>() + f64::EPSILON);
        }
    }
    normalize_columns(&mut phi);
    let theta = Array2::from_elem((num_topics, num_documents), S::one() / S::of_count(num_topics as u64));
    Ok(TopicModel { phi, theta, roles, seed, topic_sizes: vec![S::zero(); num_topics] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmOptions {
    pub iterations: usize,
    /// Number of document partitions processed in parallel. Partial `n_wt`
    /// buffers are merged in partition order.
    pub workers: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { iterations: 30, workers: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iterations: usize,
    /// L(Φ, Θ) at initialization, before the first update.
    pub initial_log_likelihood: f64,
    /// L(Φ, Θ) after each iteration's M-step.
    pub log_likelihood: Vec<f64>,
    pub perplexity: Vec<f64>,
    pub regularizer_names: Vec<String>,
    /// R_i at the point each iteration's additives were computed from.
    pub regularizer_values: Vec<Vec<f64>>,
    pub degenerate_topics: Vec<usize>,
    /// Tokens whose mixture probability was zero and scored `ln(LN_FLOOR)`.
    pub floor_hits: Vec<u64>,
}

struct Accumulated<S> {
    n_wt: Option<Array2<S>>,
    n_td: Array2<S>,
    log_likelihood: f64,
    floor_hits: u64,
}

fn check_dims<S: Scalar>(phi: &Array2<S>, theta: &Array2<S>, corpus: &Corpus) -> Result<(), ModelError> {
    if phi.nrows() != corpus.num_tokens() {
        return Err(ModelError::DimensionMismatch(format!(
            "phi has {} rows, corpus vocabulary has {} tokens",
            phi.nrows(),
            corpus.num_tokens()
        )));
    }
    if theta.nrows() != phi.ncols() || theta.ncols() != corpus.num_documents() {
        return Err(ModelError::DimensionMismatch(format!(
            "theta is {}x{}, expected {}x{}",
            theta.nrows(),
            theta.ncols(),
            phi.ncols(),
            corpus.num_documents()
        )));
    }
    Ok(())
}

/// Adds one document's expected counts; returns its log-likelihood and floor hits.
fn accumulate_document<S: Scalar>(
    phi: &Array2<S>,
    theta_d: ArrayView1<S>,
    doc: &Document,
    mut n_wt: Option<&mut Array2<S>>,
    n_td: &mut [S],
    buf: &mut [S],
) -> (f64, u64) {
    let mut ll = 0.0;
    let mut floors = 0;
    for &(w, count) in &doc.bow {
        let row = phi.row(w as usize);
        let mut z = S::zero();
        for (t, b) in buf.iter_mut().enumerate() {
            *b = row[t] * theta_d[t];
            z = z + *b;
        }
        if z > S::zero() {
            ll += count as f64 * z.as_f64().ln();
            let scale = S::of_count(count as u64) / z;
            match n_wt.as_deref_mut() {
                Some(n_wt) => {
                    let mut n_row = n_wt.row_mut(w as usize);
                    for (t, &b) in buf.iter().enumerate() {
                        let v = b * scale;
                        n_row[t] = n_row[t] + v;
                        n_td[t] = n_td[t] + v;
                    }
                }
                None => {
                    for (t, &b) in buf.iter().enumerate() {
                        n_td[t] = n_td[t] + b * scale;
                    }
                }
            }
        } else {
            ll += count as f64 * LN_FLOOR.ln();
            floors += count as u64;
        }
    }
    (ll, floors)
}

fn accumulate_range<S: Scalar>(
    phi: &Array2<S>,
    theta: &Array2<S>,
    docs: &[Document],
    offset: usize,
    with_phi: bool,
) -> Accumulated<S> {
    let num_topics = phi.ncols();
    let mut n_wt = with_phi.then(|| Array2::zeros(phi.raw_dim()));
    let mut n_td = Array2::zeros((num_topics, docs.len()));
    let mut buf = vec![S::zero(); num_topics];
    let mut col = vec![S::zero(); num_topics];
    let mut log_likelihood = 0.0;
    let mut floor_hits = 0;
    for (i, doc) in docs.iter().enumerate() {
        col.iter_mut().for_each(|v| *v = S::zero());
        let (ll, floors) =
            accumulate_document(phi, theta.column(offset + i), doc, n_wt.as_mut(), &mut col, &mut buf);
        log_likelihood += ll;
        floor_hits += floors;
        n_td.column_mut(i).iter_mut().zip(&col).for_each(|(dst, &v)| *dst = v);
    }
    Accumulated { n_wt, n_td, log_likelihood, floor_hits }
}

/// E-step over all documents with counts accumulated per partition and merged
/// in partition order.
fn accumulate<S: Scalar>(
    phi: &Array2<S>,
    theta: &Array2<S>,
    corpus: &Corpus,
    workers: usize,
    with_phi: bool,
) -> Accumulated<S> {
    let docs = corpus.documents();
    let workers = workers.max(1).min(docs.len().max(1));
    if workers == 1 {
        return accumulate_range(phi, theta, docs, 0, with_phi);
    }
    let chunk = docs.len().div_ceil(workers);
    let parts: Vec<Accumulated<S>> = docs
        .par_chunks(chunk)
        .enumerate()
        .map(|(i, range)| accumulate_range(phi, theta, range, i * chunk, with_phi))
        .collect();

    let mut n_wt = with_phi.then(|| Array2::zeros(phi.raw_dim()));
    let mut n_td = Array2::zeros((phi.ncols(), docs.len()));
    let mut log_likelihood = 0.0;
    let mut floor_hits = 0;
    for (i, part) in parts.into_iter().enumerate() {
        if let (Some(total), Some(partial)) = (n_wt.as_mut(), part.n_wt.as_ref()) {
            *total += partial;
        }
        let start = i * chunk;
        for (j, col) in part.n_td.axis_iter(Axis(1)).enumerate() {
            n_td.column_mut(start + j).assign(&col);
        }
        log_likelihood += part.log_likelihood;
        floor_hits += part.floor_hits;
    }
    Accumulated { n_wt, n_td, log_likelihood, floor_hits }
}

/// `Σ_d Σ_{w∈d} n_dw ln Σ_t φ_wt θ_td`, with `ln(LN_FLOOR)` for zero mixtures.
pub fn log_likelihood<S: Scalar>(phi: &Array2<S>, theta: &Array2<S>, corpus: &Corpus) -> Result<f64, ModelError> {
    log_likelihood_with_floor_hits(phi, theta, corpus).map(|(ll, _)| ll)
}

pub fn log_likelihood_with_floor_hits<S: Scalar>(
    phi: &Array2<S>,
    theta: &Array2<S>,
    corpus: &Corpus,
) -> Result<(f64, u64), ModelError> {
    check_dims(phi, theta, corpus)?;
    let mut ll = 0.0;
    let mut floors = 0;
    for (d, doc) in corpus.documents().iter().enumerate() {
        for &(w, count) in &doc.bow {
            let z: S = phi.row(w as usize).iter().zip(theta.column(d)).map(|(&p, &q)| p * q).sum();
            if z > S::zero() {
                ll += count as f64 * z.as_f64().ln();
            } else {
                ll += count as f64 * LN_FLOOR.ln();
                floors += count as u64;
            }
        }
    }
    Ok((ll, floors))
}

fn per_token_perplexity(log_likelihood: f64, total_tokens: u64) -> f64 {
    (-log_likelihood / total_tokens as f64).exp()
}

/// Fits `model` in place with the regularized EM algorithm.
pub fn em_fit<S: Scalar>(
    model: &mut TopicModel<S>,
    corpus: &Corpus,
    regularizers: &[Box<dyn Regularizer<S>>],
    options: EmOptions,
) -> Result<TrainStats, ModelError> {
    em_fit_observed(model, corpus, regularizers, options, |_, _| {})
}

/// Like [`em_fit`], calling `observe(iteration, model)` after every M-step.
pub fn em_fit_observed<S: Scalar, F>(
    model: &mut TopicModel<S>,
    corpus: &Corpus,
    regularizers: &[Box<dyn Regularizer<S>>],
    options: EmOptions,
    mut observe: F,
) -> Result<TrainStats, ModelError>
where
    F: FnMut(usize, &TopicModel<S>),
{
    check_dims(&model.phi, &model.theta, corpus)?;
    if corpus.total_tokens() == 0 {
        return Err(ModelError::NoTokens);
    }
    if options.iterations == 0 {
        return Err(ModelError::InvalidShape("iterations must be >= 1".to_owned()));
    }
    let n = corpus.total_tokens();
    let mut stats = TrainStats {
        regularizer_names: regularizers.iter().map(|r| r.name()).collect(),
        ..TrainStats::default()
    };

    for iteration in 0..options.iterations {
        let mut phi_add: Option<Array2<S>> = None;
        let mut theta_add: Option<Array2<S>> = None;
        let mut values = Vec::with_capacity(regularizers.len());
        for reg in regularizers {
            let additive = reg.additive(&model.phi, &model.theta);
            if !additive.is_finite() {
                return Err(ModelError::NonFiniteAdditive(reg.name()));
            }
            values.push(additive.r_value.as_f64());
            if let Some(add) = additive.phi_add {
                match phi_add.as_mut() {
                    Some(total) => *total += &add,
                    None => phi_add = Some(add),
                }
            }
            if let Some(add) = additive.theta_add {
                match theta_add.as_mut() {
                    Some(total) => *total += &add,
                    None => theta_add = Some(add),
                }
            }
        }
        stats.regularizer_values.push(values);

        let acc = accumulate(&model.phi, &model.theta, corpus, options.workers, true);
        if iteration == 0 {
            stats.initial_log_likelihood = acc.log_likelihood;
        } else {
            stats.log_likelihood.push(acc.log_likelihood);
            stats.floor_hits.push(acc.floor_hits);
        }

        let mut n_wt = acc.n_wt.expect("phi counts requested");
        if let Some(add) = &phi_add {
            n_wt += add;
        }
        let mut n_td = acc.n_td;
        if let Some(add) = &theta_add {
            n_td += add;
        }
        let degenerate = normalize_columns(&mut n_wt);
        normalize_columns(&mut n_td);
        model.phi = n_wt;
        model.theta = n_td;
        stats.degenerate_topics.push(degenerate.iter().filter(|&&d| d).count());
        observe(iteration, model);
    }

    let (ll, floors) = log_likelihood_with_floor_hits(&model.phi, &model.theta, corpus)?;
    stats.log_likelihood.push(ll);
    stats.floor_hits.push(floors);
    stats.perplexity = stats.log_likelihood.iter().map(|&l| per_token_perplexity(l, n)).collect();
    stats.iterations = options.iterations;
    if stats.floor_hits.iter().any(|&f| f > 0) {
        log::debug!("log-likelihood floor triggered during fit");
    }
    model.recompute_topic_sizes(corpus);
    Ok(stats)
}

/// Runs the EM loop updating Θ only, starting from uniform Θ.
pub fn infer_theta_fixed_phi<S: Scalar>(
    phi: &Array2<S>,
    corpus: &Corpus,
    iterations: usize,
    workers: usize,
) -> Result<Array2<S>, ModelError> {
    if phi.iter().all(|&v| v == S::zero()) {
        return Err(ModelError::ZeroPhi);
    }
    let num_topics = phi.ncols();
    let mut theta =
        Array2::from_elem((num_topics, corpus.num_documents()), S::one() / S::of_count(num_topics as u64));
    check_dims(phi, &theta, corpus)?;
    for _ in 0..iterations {
        let mut n_td = accumulate(phi, &theta, corpus, workers, false).n_td;
        normalize_columns(&mut n_td);
        theta = n_td;
    }
    Ok(theta)
}
