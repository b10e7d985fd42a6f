//! Independent trainings of one model with seeds `0..runs`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelName, ModelSpec};
use crate::corpus::{CooccurrenceStats, Corpus};
use crate::itar::{ItarError, Thresholds};
use crate::metrics::{self, QualityCriterion, TopicPrior, TopicQuality, DEFAULT_TOP_WORDS};
use crate::model::{em_fit, init_model, EmOptions, TopicModel, TopicRole};
use crate::regularizers::{build_all, ResolveContext};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub em_iterations: usize,
    pub top_words: usize,
    pub topic_prior: TopicPrior,
    /// EM partitions per training; runs of a series execute in parallel.
    pub workers: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { em_iterations: 30, top_words: DEFAULT_TOP_WORDS, topic_prior: TopicPrior::default(), workers: 1 }
    }
}

/// Metrics of one trained model. Per-topic scores cover the subject topics,
/// fixed topics first; `None` marks a degenerate topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub perplexity: f64,
    pub diversity: Option<f64>,
    pub fixed_topics: usize,
    pub toptoken: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra: Option<Vec<Option<f64>>>,
}

impl RunRecord {
    pub fn from_model<S: Scalar>(
        model: &TopicModel<S>,
        corpus: &Corpus,
        qualities: &[TopicQuality],
    ) -> Result<Self, ItarError> {
        let subject = model.subject_topics();
        let alive: Vec<usize> = subject.iter().copied().filter(|&t| !qualities[t].degenerate).collect();
        let score = |f: &dyn Fn(&TopicQuality) -> f64| -> Vec<Option<f64>> {
            subject.iter().map(|&t| (!qualities[t].degenerate).then(|| f(&qualities[t]))).collect()
        };
        let has_intra = subject.iter().any(|&t| qualities[t].coherence_intra.is_some());
        Ok(RunRecord {
            seed: model.seed,
            perplexity: metrics::model_perplexity(model, corpus)?,
            diversity: if alive.len() >= 2 { Some(metrics::diversity(&model.phi, &alive)?) } else { None },
            fixed_topics: subject.iter().filter(|&&t| model.roles[t].is_fixed()).count(),
            toptoken: score(&|q| q.coherence_toptoken),
            intra: has_intra.then(|| score(&|q| q.coherence_intra.unwrap_or(0.0))),
        })
    }

    pub fn scores(&self, criterion: QualityCriterion) -> &[Option<f64>] {
        match criterion {
            QualityCriterion::Toptoken => &self.toptoken,
            QualityCriterion::Intratext => self.intra.as_deref().unwrap_or(&[]),
        }
    }

    pub fn num_topics(&self) -> usize {
        self.toptoken.len()
    }

    /// Mean coherence over the non-degenerate topics.
    pub fn coherence(&self, criterion: QualityCriterion) -> f64 {
        let alive: Vec<f64> = self.scores(criterion).iter().flatten().copied().collect();
        if alive.is_empty() {
            0.0
        } else {
            alive.iter().sum::<f64>() / alive.len() as f64
        }
    }

    /// Fixed topics plus free topics at or above the good threshold.
    pub fn good_topics(&self, thresholds: &Thresholds, criterion: QualityCriterion) -> usize {
        let free = self.scores(criterion).iter().skip(self.fixed_topics);
        self.fixed_topics + free.flatten().filter(|&&c| c >= thresholds.theta_good).count()
    }

    pub fn good_percent(&self, thresholds: &Thresholds, criterion: QualityCriterion) -> f64 {
        100.0 * self.good_topics(thresholds, criterion) as f64 / self.num_topics().max(1) as f64
    }

    pub fn degenerate_topics(&self) -> usize {
        self.toptoken.iter().filter(|s| s.is_none()).count()
    }
}

/// Results of one model of an experiment: a series of independent runs, or
/// the per-iteration models of an iterative method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub kind: ModelName,
    #[serde(rename = "T")]
    pub topics: usize,
    pub runs: Vec<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Bad topics banked over all iterations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_bad: Option<usize>,
    /// Bad topics that repeat an earlier banked bad topic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bad_refound: Option<usize>,
    /// Perplexity of the bank as a model, with and without a background topic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_perplexity: Option<[f64; 2]>,
}

impl ModelResult {
    pub fn is_iterative(&self) -> bool {
        self.kind.is_iterative()
    }

    /// The reported run: the last iteration of an iterative model, otherwise
    /// the run with the most good topics (lowest index on ties).
    pub fn selected_run(&self, thresholds: &Thresholds, criterion: QualityCriterion) -> usize {
        if self.is_iterative() {
            return self.runs.len().saturating_sub(1);
        }
        let mut best = 0;
        for (i, run) in self.runs.iter().enumerate() {
            if run.good_topics(thresholds, criterion) > self.runs[best].good_topics(thresholds, criterion) {
                best = i;
            }
        }
        best
    }
}

/// Every non-degenerate topic coherence of every run.
pub fn pool_coherences<'a>(results: impl IntoIterator<Item = &'a ModelResult>, criterion: QualityCriterion) -> Vec<f64> {
    results
        .into_iter()
        .flat_map(|r| r.runs.iter())
        .flat_map(|run| run.scores(criterion).iter().flatten().copied())
        .collect()
}

/// Trains `spec` from seed `seed`, returning the model and its topic scores.
pub fn train_run<S: Scalar>(
    spec: &ModelSpec,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    seed: u64,
    opts: &SeriesOptions,
) -> Result<(TopicModel<S>, Vec<TopicQuality>), ItarError> {
    let mut roles = vec![TopicRole::Domain; spec.topics];
    roles.extend(std::iter::repeat_n(TopicRole::Background, spec.background()));
    let mut model = init_model::<S>(corpus.num_tokens(), roles.len(), corpus.num_documents(), seed, roles.clone())?;
    let ctx = ResolveContext::<S>::new(corpus.num_tokens(), corpus.num_documents(), corpus.total_tokens(), &roles);
    let regularizers = build_all(&spec.regularizers(), &ctx)?;
    em_fit(&mut model, corpus, &regularizers, EmOptions { iterations: opts.em_iterations, workers: opts.workers })?;
    let prior = corpus.has_sequences().then_some(opts.topic_prior);
    let qualities = metrics::evaluate_topics(&model, corpus, cooc, opts.top_words, prior)?;
    Ok((model, qualities))
}

/// Trains `spec.runs` independent models with seeds `0..runs` in parallel.
pub fn run_series<S: Scalar>(
    spec: &ModelSpec,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    opts: &SeriesOptions,
) -> Result<ModelResult, ItarError> {
    if spec.name.is_iterative() {
        return Err(ItarError::Config(format!("{} is not a series model", spec.name)));
    }
    let runs = (0..spec.runs as u64)
        .into_par_iter()
        .map(|seed| {
            let (model, qualities) = train_run::<S>(spec, corpus, cooc, seed, opts)?;
            RunRecord::from_model(&model, corpus, &qualities)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelResult {
        name: spec.display_name(),
        kind: spec.name,
        topics: spec.topics,
        runs,
        max_iterations: None,
        bank_bad: None,
        bad_refound: None,
        bank_perplexity: None,
    })
}
