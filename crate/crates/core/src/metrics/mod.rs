//! Intrinsic quality measures of topic models and of individual topics.

mod coherence;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CooccurrenceStats, Corpus, TokenId};
use crate::model::{log_likelihood, ModelError, TopicModel};
use crate::scalar::Scalar;

pub use coherence::{
    coherence_intratext, coherence_toptoken, mean_segment_lengths, ppmi, word_topic_assignment, TopicPrior,
};

/// Number of top words per topic used for coherence.
pub const DEFAULT_TOP_WORDS: usize = 20;
/// Probability floor applied before the symmetrized KL of [`diversity`].
pub const DIVERSITY_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("corpus contains no tokens")]
    NoTokens,
    #[error("percentile of an empty list")]
    EmptyValues,
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("diversity needs at least two non-degenerate topics, got {0}")]
    TooFewTopics(usize),
    #[error("intra-text coherence needs documents in natural word order")]
    MissingSequences,
    #[error("baseline density must be positive")]
    ZeroBaseline,
    #[error("bank is empty")]
    EmptyBank,
    #[error("total must be positive")]
    ZeroTotal,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `exp(-L / n)`: per-token perplexity.
pub fn perplexity<S: Scalar>(phi: &Array2<S>, theta: &Array2<S>, corpus: &Corpus) -> Result<f64, MetricError> {
    if corpus.total_tokens() == 0 {
        return Err(MetricError::NoTokens);
    }
    let ll = log_likelihood(phi, theta, corpus)?;
    Ok((-ll / corpus.total_tokens() as f64).exp())
}

pub fn model_perplexity<S: Scalar>(model: &TopicModel<S>, corpus: &Corpus) -> Result<f64, MetricError> {
    perplexity(&model.phi, &model.theta, corpus)
}

/// The `k` most probable tokens of a topic column, by probability descending
/// and token id ascending on ties. Zero-probability tokens are never included.
pub fn top_words<S: Scalar>(column: ArrayView1<S>, k: usize) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..column.len() as TokenId).filter(|&w| column[w as usize] > S::zero()).collect();
    ids.sort_by(|&a, &b| {
        column[b as usize]
            .partial_cmp(&column[a as usize])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    ids.truncate(k);
    ids
}

/// Mean over topic pairs of `sqrt(½(KL(φ_i‖φ_j) + KL(φ_j‖φ_i)))`.
///
/// Degenerate topics in `topics` are skipped. Each column is floored at
/// [`DIVERSITY_EPSILON`] and renormalized so disjoint supports stay finite.
pub fn diversity<S: Scalar>(phi: &Array2<S>, topics: &[usize]) -> Result<f64, MetricError> {
    let columns: Vec<Vec<f64>> = topics
        .iter()
        .map(|&t| phi.column(t))
        .filter(|c| c.iter().any(|&v| v > S::zero()))
        .map(|c| {
            let floored: Vec<f64> = c.iter().map(|v| v.as_f64().max(DIVERSITY_EPSILON)).collect();
            let sum: f64 = floored.iter().sum();
            floored.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    if columns.len() < 2 {
        return Err(MetricError::TooFewTopics(columns.len()));
    }
    let kl = |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum() };
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            let sym = 0.5 * (kl(&columns[i], &columns[j]) + kl(&columns[j], &columns[i]));
            total += sym.max(0.0).sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Linear-interpolation percentile at rank `q·(N−1)`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyValues);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(MetricError::InvalidQuantile(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// `(good / total) / baseline`.
pub fn relative_density(good: usize, total: usize, baseline: f64) -> Result<f64, MetricError> {
    if total == 0 {
        return Err(MetricError::ZeroTotal);
    }
    if baseline <= 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok((good as f64 / total as f64) / baseline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicQuality {
    pub topic: usize,
    pub coherence_toptoken: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_intra: Option<f64>,
    pub top_words: Vec<TokenId>,
    pub size: f64,
    pub degenerate: bool,
}

impl TopicQuality {
    pub fn coherence(&self, criterion: QualityCriterion) -> f64 {
        match criterion {
            QualityCriterion::Toptoken => self.coherence_toptoken,
            QualityCriterion::Intratext => self.coherence_intra.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityCriterion {
    #[default]
    Toptoken,
    Intratext,
}

/// Per-topic quality of every topic in `model`. Intra-text coherence is
/// computed only when `intra` is given (requires sequences).
pub fn evaluate_topics<S: Scalar>(
    model: &TopicModel<S>,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    k: usize,
    intra: Option<TopicPrior>,
) -> Result<Vec<TopicQuality>, MetricError> {
    let intra_values = match intra {
        Some(prior) => Some(coherence_intratext(&model.phi, &model.topic_sizes, corpus, prior)?),
        None => None,
    };
    Ok((0..model.num_topics())
        .map(|t| {
            let top = top_words(model.phi.column(t), k);
            TopicQuality {
                topic: t,
                coherence_toptoken: coherence_toptoken(&top, cooc, k),
                coherence_intra: intra_values.as_ref().map(|v| v[t]),
                degenerate: top.is_empty(),
                top_words: top,
                size: model.topic_sizes[t].as_f64(),
            }
        })
        .collect())
}
