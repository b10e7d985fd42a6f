use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::{CooccurrenceStats, Corpus, TokenId};
use crate::scalar::Scalar;

/// Positive PMI of two tokens with document-window probabilities. Pairs that
/// never co-occur score 0.
pub fn ppmi(cooc: &CooccurrenceStats, a: TokenId, b: TokenId) -> f64 {
    let joint = cooc.pair_doc_freq(a, b);
    if joint == 0 {
        return 0.0;
    }
    let n = cooc.doc_count() as f64;
    let p_ab = joint as f64 / n;
    let p_a = cooc.token_doc_freq(a) as f64 / n;
    let p_b = cooc.token_doc_freq(b) as f64 / n;
    (p_ab / (p_a * p_b)).ln().max(0.0)
}

/// Mean PPMI over unordered pairs of the first `k` top words. Fewer than two
/// words yield 0.
pub fn coherence_toptoken(top_words: &[TokenId], cooc: &CooccurrenceStats, k: usize) -> f64 {
    let words = &top_words[..top_words.len().min(k)];
    if words.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in words.iter().enumerate() {
        for &b in &words[i + 1..] {
            total += ppmi(cooc, a, b);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Prior over topics used to turn `φ_wt` into `p(t | w)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicPrior {
    /// `p(t | w) ∝ φ_wt n_t`.
    #[default]
    TopicSize,
    /// `p(t | w) ∝ φ_wt`.
    Uniform,
}

/// `argmax_t p(t | w)` for every vocabulary token, lowest topic index on ties.
/// Tokens with `p(t | w) = 0` for all topics get no topic.
pub fn word_topic_assignment<S: Scalar>(phi: &Array2<S>, topic_sizes: &[S], prior: TopicPrior) -> Vec<Option<usize>> {
    phi.rows()
        .into_iter()
        .map(|row| {
            let mut best: Option<(usize, S)> = None;
            for (t, &p) in row.iter().enumerate() {
                let score = match prior {
                    TopicPrior::TopicSize => p * topic_sizes[t],
                    TopicPrior::Uniform => p,
                };
                if score > S::zero() && best.is_none_or(|(_, b)| score > b) {
                    best = Some((t, score));
                }
            }
            best.map(|(t, _)| t)
        })
        .collect()
}

/// Mean length of maximal same-topic runs per topic. Runs never span
/// documents and an unassigned position ends the current run. Topics without
/// any assigned position score 0.
pub fn mean_segment_lengths<I, D>(documents: I, num_topics: usize) -> Vec<f64>
where
    I: IntoIterator<Item = D>,
    D: IntoIterator<Item = Option<usize>>,
{
    let mut total = vec![0u64; num_topics];
    let mut count = vec![0u64; num_topics];
    for doc in documents {
        let mut run: Option<(usize, u64)> = None;
        for assigned in doc {
            run = match (run, assigned) {
                (Some((t, len)), Some(a)) if t == a => Some((t, len + 1)),
                (prev, next) => {
                    if let Some((t, len)) = prev {
                        total[t] += len;
                        count[t] += 1;
                    }
                    next.map(|a| (a, 1))
                }
            };
        }
        if let Some((t, len)) = run {
            total[t] += len;
            count[t] += 1;
        }
    }
    total
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s as f64 / c as f64 })
        .collect()
}

/// Intra-text coherence: the mean length of each topic's segments when every
/// token position is assigned its most probable topic.
pub fn coherence_intratext<S: Scalar>(
    phi: &Array2<S>,
    topic_sizes: &[S],
    corpus: &Corpus,
    prior: TopicPrior,
) -> Result<Vec<f64>, MetricError> {
    if !corpus.has_sequences() {
        return Err(MetricError::MissingSequences);
    }
    let assignment = word_topic_assignment(phi, topic_sizes, prior);
    let docs = corpus
        .documents()
        .iter()
        .map(|d| d.sequence.as_deref().unwrap_or_default().iter().map(|&w| assignment[w as usize]));
    Ok(mean_segment_lengths(docs, phi.ncols()))
}
