//! TopicBank baselines: a fresh unregularized (or base ARTM) model per
//! iteration, whose coherent topics are collected without fixing or sifting.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::series::{train_run, RunRecord, SeriesOptions};
use super::{ModelName, ModelSpec};
use crate::corpus::{unigram_distribution, CooccurrenceStats, Corpus};
use crate::itar::{cosine, BankEntry, BankLabel, ItarError, Thresholds, TopicBank};
use crate::metrics::{self, MetricError, QualityCriterion};
use crate::model::{infer_theta_fixed_phi, TopicModel, TopicRole};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicBankVariant {
    /// Threshold = 90th percentile of the current model's own coherences.
    PerModel,
    /// Threshold = the shared good threshold.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicBankConfig {
    pub variant: TopicBankVariant,
    pub base: ModelSpec,
    pub iterations: usize,
    pub thresholds: Thresholds,
    pub criterion: QualityCriterion,
    pub percentile: f64,
    pub dedup_cosine: f64,
    /// EM sweeps of Θ inference when the bank is evaluated as a model.
    pub inference_iterations: usize,
}

impl TopicBankConfig {
    pub fn new(variant: TopicBankVariant, topics: usize, thresholds: Thresholds) -> Self {
        Self {
            variant,
            base: ModelSpec::new(ModelName::Plsa, topics),
            iterations: 20,
            thresholds,
            criterion: QualityCriterion::Toptoken,
            percentile: 0.9,
            dedup_cosine: 0.9,
            inference_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicBankIteration {
    pub iteration: usize,
    pub threshold: f64,
    pub added: usize,
    pub duplicates: usize,
    pub bank_size: usize,
}

#[derive(Debug, Clone)]
pub struct TopicBankOutcome<S> {
    pub bank: TopicBank,
    pub history: Vec<TopicBankIteration>,
    /// Metrics of the bank evaluated as a model after each iteration; absent
    /// while the bank is empty.
    pub records: Vec<Option<RunRecord>>,
    /// The final bank as a model: Φ = banked columns, Θ inferred.
    pub model: Option<TopicModel<S>>,
}

/// Bank columns as a W × |bank| matrix.
pub fn bank_phi<S: Scalar>(bank: &TopicBank, num_tokens: usize) -> Array2<S> {
    let mut phi = Array2::zeros((num_tokens, bank.len()));
    for (t, e) in bank.entries().iter().enumerate() {
        for (w, &v) in e.column.iter().enumerate() {
            phi[[w, t]] = S::of(v);
        }
    }
    phi
}

/// Perplexity of a fixed Φ with Θ fitted by EM. With `with_background`, the
/// corpus unigram distribution is added as one more column; since a zero
/// background weight reproduces the fit without it, the lower of the two
/// perplexities is returned.
pub fn bank_perplexity<S: Scalar>(
    phi: &Array2<S>,
    corpus: &Corpus,
    with_background: bool,
    iterations: usize,
) -> Result<f64, MetricError> {
    if phi.ncols() == 0 {
        return Err(MetricError::EmptyBank);
    }
    let theta = infer_theta_fixed_phi(phi, corpus, iterations, 1)?;
    let without = metrics::perplexity(phi, &theta, corpus)?;
    if !with_background {
        return Ok(without);
    }
    let extended = {
        let unigram = unigram_distribution::<S>(corpus).map_err(|_| MetricError::NoTokens)?;
        let mut extended = Array2::zeros((phi.nrows(), phi.ncols() + 1));
        extended.slice_mut(ndarray::s![.., ..phi.ncols()]).assign(phi);
        for (w, v) in unigram.into_iter().enumerate() {
            extended[[w, phi.ncols()]] = v;
        }
        extended
    };
    let theta = infer_theta_fixed_phi(&extended, corpus, iterations, 1)?;
    Ok(metrics::perplexity(&extended, &theta, corpus)?.min(without))
}

fn bank_model<S: Scalar>(
    bank: &TopicBank,
    corpus: &Corpus,
    iterations: usize,
) -> Result<TopicModel<S>, ItarError> {
    let phi = bank_phi::<S>(bank, corpus.num_tokens());
    let theta = infer_theta_fixed_phi(&phi, corpus, iterations, 1)?;
    let mut model = TopicModel {
        phi,
        theta,
        roles: vec![TopicRole::Domain; bank.len()],
        seed: 0,
        topic_sizes: vec![S::zero(); bank.len()],
    };
    model.recompute_topic_sizes(corpus);
    Ok(model)
}

pub fn run_topicbank<S: Scalar>(
    cfg: &TopicBankConfig,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    opts: &SeriesOptions,
) -> Result<TopicBankOutcome<S>, ItarError> {
    let mut bank = TopicBank::new();
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut model = None;
    let prior = corpus.has_sequences().then_some(opts.topic_prior);
    for iteration in 0..cfg.iterations {
        let (fresh, qualities) = train_run::<S>(&cfg.base, corpus, cooc, iteration as u64, opts)?;
        let candidates: Vec<usize> =
            fresh.subject_topics().into_iter().filter(|&t| !qualities[t].degenerate).collect();
        let scores: Vec<f64> = candidates.iter().map(|&t| qualities[t].coherence(cfg.criterion)).collect();
        let threshold = match cfg.variant {
            TopicBankVariant::PerModel if scores.is_empty() => f64::INFINITY,
            TopicBankVariant::PerModel => metrics::percentile(&scores, cfg.percentile)?,
            TopicBankVariant::Shared => cfg.thresholds.theta_good,
        };
        let (mut added, mut duplicates) = (0, 0);
        for (&t, &score) in candidates.iter().zip(&scores) {
            if score < threshold {
                continue;
            }
            let column: Vec<f64> = fresh.phi.column(t).iter().map(|v| v.as_f64()).collect();
            if bank.entries().iter().any(|e| cosine(&e.column, &column) >= cfg.dedup_cosine) {
                duplicates += 1;
                continue;
            }
            bank.push(BankEntry {
                id: TopicBank::make_id(BankLabel::Good, iteration, t),
                label: BankLabel::Good,
                source_iteration: iteration,
                coherence: score,
                column,
            })?;
            added += 1;
        }
        history.push(TopicBankIteration { iteration, threshold, added, duplicates, bank_size: bank.len() });
        if bank.is_empty() {
            records.push(None);
            continue;
        }
        let as_model = bank_model::<S>(&bank, corpus, cfg.inference_iterations)?;
        let q = metrics::evaluate_topics(&as_model, corpus, cooc, opts.top_words, prior)?;
        records.push(Some(RunRecord::from_model(&as_model, corpus, &q)?));
        model = Some(as_model);
    }
    Ok(TopicBankOutcome { bank, history, records, model })
}
