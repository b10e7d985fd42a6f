//! Iterative topic accumulation: repeatedly train a regularized model, label
//! its free topics by coherence, bank the good and bad ones, and fix or sift
//! against the bank in the next iteration.

mod bank;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bank::{BankEntry, BankError, BankLabel, TopicBank, BANK_PROB_EPSILON};

use crate::corpus::{CooccurrenceStats, Corpus};
use crate::metrics::{self, MetricError, QualityCriterion, TopicPrior, TopicQuality, DEFAULT_TOP_WORDS};
use crate::model::{em_fit_observed, init_model, EmOptions, ModelError, TopicModel, TopicRole, TrainStats};
use crate::regularizers::{
    build_all, RegularizerConfig, RegularizerError, RegularizerKind, ResolveContext, Side, SiftVersion, Target,
    TopicSet,
};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ItarError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Regularizer(#[from] RegularizerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("bank holds {good} good topics but the model has only {topics}")]
    BankTooLarge { good: usize, topics: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta_good: f64,
    pub theta_bad: f64,
    #[serde(default)]
    pub source: String,
}

impl Thresholds {
    pub fn new(theta_good: f64, theta_bad: f64) -> Self {
        Self { theta_good, theta_bad, source: String::new() }
    }
}

/// 80th and 20th percentiles of a pooled coherence sample.
pub fn compute_thresholds(pool: &[f64]) -> Result<Thresholds, MetricError> {
    Ok(Thresholds {
        theta_good: metrics::percentile(pool, 0.8)?,
        theta_bad: metrics::percentile(pool, 0.2)?,
        source: format!("{} pooled topics", pool.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicLabel {
    Good,
    Bad,
    Neutral,
}

impl TopicLabel {
    pub fn bank_label(self) -> Option<BankLabel> {
        match self {
            TopicLabel::Good => Some(BankLabel::Good),
            TopicLabel::Bad => Some(BankLabel::Bad),
            TopicLabel::Neutral => None,
        }
    }
}

impl FromStr for TopicLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "good" => Ok(TopicLabel::Good),
            "bad" => Ok(TopicLabel::Bad),
            "neutral" => Ok(TopicLabel::Neutral),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Which of the fix, sift-bad and sift-good components are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    pub fix_good: bool,
    pub sift_bad: bool,
    pub sift_good: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { fix_good: true, sift_bad: true, sift_good: true }
    }
}

impl Ablation {
    /// The 8 flag combinations, `0-0-0` first.
    pub fn all() -> Vec<Ablation> {
        (0..8u8)
            .map(|m| Ablation { fix_good: m & 4 != 0, sift_bad: m & 2 != 0, sift_good: m & 1 != 0 })
            .collect()
    }

    pub fn model_name(&self) -> String {
        format!("itar_{self}")
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |v: bool| u8::from(v);
        write!(f, "{}-{}-{}", b(self.fix_good), b(self.sift_bad), b(self.sift_good))
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let flags: Vec<bool> = s
            .split('-')
            .map(|p| match p {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(format!("ablation flags must look like 1-0-1, got {s:?}")),
            })
            .collect::<Result<_, _>>()?;
        match flags[..] {
            [fix_good, sift_bad, sift_good] => Ok(Ablation { fix_good, sift_bad, sift_good }),
            _ => Err(format!("ablation flags must look like 1-0-1, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelingMode {
    #[default]
    Automatic,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseCoefficients {
    /// Relative sparsing of domain topics (negative).
    pub sparse: f64,
    /// Relative decorrelation of domain topics.
    pub decorrelation: f64,
    /// Relative smoothing of background topics.
    pub smooth: f64,
}

impl Default for BaseCoefficients {
    fn default() -> Self {
        Self { sparse: -0.05, decorrelation: 0.01, smooth: 0.05 }
    }
}

impl BaseCoefficients {
    /// Sparsing and decorrelation of domain topics, smoothing of background
    /// topics when the model has any.
    pub fn regularizers(&self, background_topics: usize) -> Vec<RegularizerConfig> {
        let mut out = Vec::new();
        if self.sparse != 0.0 {
            out.push(
                RegularizerConfig::new(RegularizerKind::SmoothSparse, self.sparse)
                    .relative()
                    .on(TopicSet::Domain)
                    .side(Side::Both),
            );
        }
        if self.decorrelation != 0.0 {
            out.push(
                RegularizerConfig::new(RegularizerKind::Decorrelation, self.decorrelation)
                    .relative()
                    .on(TopicSet::Domain),
            );
        }
        if background_topics > 0 && self.smooth != 0.0 {
            out.push(
                RegularizerConfig::new(RegularizerKind::SmoothSparse, self.smooth)
                    .relative()
                    .on(TopicSet::Background)
                    .side(Side::Both),
            );
        }
        out
    }
}

fn default_max_iterations() -> usize {
    20
}
fn default_em_iterations() -> usize {
    30
}
fn default_tau_fix() -> f64 {
    1e9
}
fn default_tau_sift() -> f64 {
    1e5
}
fn default_stop_fraction() -> f64 {
    0.9
}
fn default_top_words() -> usize {
    DEFAULT_TOP_WORDS
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItarConfig {
    #[serde(rename = "T")]
    pub topics: usize,
    #[serde(default)]
    pub background_topics: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_em_iterations")]
    pub em_iterations: usize,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub base: BaseCoefficients,
    #[serde(default = "default_tau_fix")]
    pub tau_fix: f64,
    #[serde(default = "default_tau_sift")]
    pub tau_sift_bad: f64,
    #[serde(default = "default_tau_sift")]
    pub tau_sift_good: f64,
    #[serde(default = "default_sift_version")]
    pub sift_version: SiftVersion,
    #[serde(default)]
    pub ablation_flags: Ablation,
    #[serde(default = "default_stop_fraction")]
    pub stop_good_fraction: f64,
    #[serde(default)]
    pub quality_criterion: QualityCriterion,
    #[serde(default)]
    pub labeling_mode: LabelingMode,
    #[serde(default = "default_top_words")]
    pub top_words: usize,
    #[serde(default)]
    pub topic_prior: TopicPrior,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_sift_version() -> SiftVersion {
    SiftVersion::V1
}

impl ItarConfig {
    pub fn new(topics: usize, thresholds: Thresholds) -> Self {
        Self {
            topics,
            background_topics: 0,
            max_iterations: default_max_iterations(),
            em_iterations: default_em_iterations(),
            thresholds,
            base: BaseCoefficients::default(),
            tau_fix: default_tau_fix(),
            tau_sift_bad: default_tau_sift(),
            tau_sift_good: default_tau_sift(),
            sift_version: SiftVersion::V1,
            ablation_flags: Ablation::default(),
            stop_good_fraction: default_stop_fraction(),
            quality_criterion: QualityCriterion::Toptoken,
            labeling_mode: LabelingMode::Automatic,
            top_words: DEFAULT_TOP_WORDS,
            topic_prior: TopicPrior::default(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ItarError> {
        let fail = |m: &str| Err(ItarError::Config(m.to_owned()));
        if self.topics == 0 {
            return fail("T must be positive");
        }
        if !(self.stop_good_fraction > 0.0 && self.stop_good_fraction <= 1.0) {
            return fail("stop_good_fraction must be in (0, 1]");
        }
        if [self.tau_fix, self.tau_sift_bad, self.tau_sift_good].iter().any(|&t| !(t >= 0.0)) {
            return fail("tau_fix, tau_sift_bad and tau_sift_good must be non-negative");
        }
        if self.thresholds.theta_bad > self.thresholds.theta_good {
            return fail("theta_bad exceeds theta_good");
        }
        if self.em_iterations == 0 || self.top_words < 2 {
            return fail("em_iterations must be positive and top_words at least 2");
        }
        Ok(())
    }

    /// Number of banked good topics that stops the loop.
    pub fn good_quota(&self) -> usize {
        // the small slack keeps e.g. 0.9 * 20 from rounding up to 19
        (self.stop_good_fraction * self.topics as f64 - 1e-9).ceil().max(0.0) as usize
    }

    fn sift_kind(&self) -> RegularizerKind {
        match self.sift_version {
            SiftVersion::V1 => RegularizerKind::SiftV1,
            SiftVersion::V2 => RegularizerKind::SiftV2,
        }
    }

    /// Regularizer stack of one iteration, given whether the bank has good
    /// and bad columns.
    pub fn regularizers(&self, has_fixed: bool, has_bad: bool, has_good: bool) -> Vec<RegularizerConfig> {
        let mut out = self.base.regularizers(self.background_topics);
        let flags = self.ablation_flags;
        if flags.fix_good && has_fixed && self.tau_fix > 0.0 {
            out.push(RegularizerConfig::new(RegularizerKind::Fix, self.tau_fix).on(TopicSet::Fixed));
        }
        if flags.sift_bad && has_bad && self.tau_sift_bad > 0.0 {
            out.push(RegularizerConfig::new(self.sift_kind(), self.tau_sift_bad).target(Target::BankBad));
        }
        if flags.sift_good && has_good && self.tau_sift_good > 0.0 {
            out.push(RegularizerConfig::new(self.sift_kind(), self.tau_sift_good).target(Target::BankGood));
        }
        out
    }
}

/// Labels each free, non-degenerate topic by the threshold rule; `overrides`
/// replace the automatic label of a topic. Degenerate topics stay neutral.
pub fn classify_topics<S: Scalar>(
    model: &TopicModel<S>,
    qualities: &[TopicQuality],
    thresholds: &Thresholds,
    criterion: QualityCriterion,
    overrides: &BTreeMap<usize, TopicLabel>,
) -> Vec<(usize, TopicLabel)> {
    model
        .free_topics()
        .into_iter()
        .map(|t| {
            let q = &qualities[t];
            let label = if q.degenerate {
                TopicLabel::Neutral
            } else if let Some(&human) = overrides.get(&t) {
                human
            } else {
                auto_label(q.coherence(criterion), thresholds)
            };
            (t, label)
        })
        .collect()
}

pub fn auto_label(coherence: f64, thresholds: &Thresholds) -> TopicLabel {
    if coherence >= thresholds.theta_good {
        TopicLabel::Good
    } else if coherence <= thresholds.theta_bad {
        TopicLabel::Bad
    } else {
        TopicLabel::Neutral
    }
}

/// Appends the good and bad topics of `labels` to `bank`, returning the new
/// entries. Neutral topics are dropped.
pub fn update_bank<S: Scalar>(
    bank: &mut TopicBank,
    model: &TopicModel<S>,
    labels: &[(usize, TopicLabel)],
    qualities: &[TopicQuality],
    criterion: QualityCriterion,
    iteration: usize,
) -> Result<Vec<BankEntry>, BankError> {
    let mut added = Vec::new();
    for &(t, label) in labels {
        let Some(bank_label) = label.bank_label() else { continue };
        let entry = BankEntry {
            id: TopicBank::make_id(bank_label, iteration, t),
            label: bank_label,
            source_iteration: iteration,
            coherence: qualities[t].coherence(criterion),
            column: model.phi.column(t).iter().map(|v| v.as_f64()).collect(),
        };
        bank.push(entry.clone())?;
        added.push(entry);
    }
    Ok(added)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "reason", rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GoodQuota,
    ZeroIntra,
    DegenerateFree,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::GoodQuota => "good-quota",
            StopReason::ZeroIntra => "zero-intra",
            StopReason::DegenerateFree => "degenerate-free",
            StopReason::MaxIterations => "max-iterations",
        })
    }
}

pub fn check_stopping<S: Scalar>(
    bank: &TopicBank,
    model: &TopicModel<S>,
    qualities: &[TopicQuality],
    cfg: &ItarConfig,
) -> StopDecision {
    if bank.good_count() >= cfg.good_quota() {
        return StopDecision::Stop(StopReason::GoodQuota);
    }
    if cfg.quality_criterion == QualityCriterion::Intratext
        && model
            .subject_topics()
            .iter()
            .any(|&t| !qualities[t].degenerate && qualities[t].coherence_intra == Some(0.0))
    {
        return StopDecision::Stop(StopReason::ZeroIntra);
    }
    let free = model.free_topics();
    if !free.is_empty() && free.iter().all(|&t| model.is_degenerate(t)) {
        return StopDecision::Stop(StopReason::DegenerateFree);
    }
    StopDecision::Continue
}

/// Model-level quality in the table layout: perplexity, mean coherence of
/// the non-degenerate subject topics, share of good topics, diversity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub perplexity: f64,
    pub coherence: f64,
    pub good_topics: usize,
    pub good_percent: f64,
    pub diversity: Option<f64>,
    pub degenerate_topics: usize,
}

/// `good_topics` counts fixed topics plus every subject topic labeled good.
pub fn model_metrics<S: Scalar>(
    model: &TopicModel<S>,
    corpus: &Corpus,
    qualities: &[TopicQuality],
    thresholds: &Thresholds,
    criterion: QualityCriterion,
    labels: Option<&[(usize, TopicLabel)]>,
) -> Result<ModelMetrics, ItarError> {
    let subject = model.subject_topics();
    let alive: Vec<usize> = subject.iter().copied().filter(|&t| !qualities[t].degenerate).collect();
    let coherence = if alive.is_empty() {
        0.0
    } else {
        alive.iter().map(|&t| qualities[t].coherence(criterion)).sum::<f64>() / alive.len() as f64
    };
    let good_topics = match labels {
        Some(labels) => {
            let fixed = subject.iter().filter(|&&t| model.roles[t].is_fixed()).count();
            fixed + labels.iter().filter(|(_, l)| *l == TopicLabel::Good).count()
        }
        None => alive
            .iter()
            .filter(|&&t| auto_label(qualities[t].coherence(criterion), thresholds) == TopicLabel::Good)
            .count(),
    };
    let diversity = if alive.len() >= 2 { Some(metrics::diversity(&model.phi, &alive)?) } else { None };
    Ok(ModelMetrics {
        perplexity: metrics::model_perplexity(model, corpus)?,
        coherence,
        good_topics,
        good_percent: 100.0 * good_topics as f64 / subject.len().max(1) as f64,
        diversity,
        degenerate_topics: subject.len() - alive.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicLabelRecord {
    pub topic: usize,
    pub label: TopicLabel,
    pub auto_label: TopicLabel,
    pub coherence: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub fixed_topics: usize,
    pub labels: Vec<TopicLabelRecord>,
    pub good_added: usize,
    pub bad_added: usize,
    /// Bad topics of this iteration within cosine 0.9 of a bad topic banked
    /// in an earlier iteration.
    pub bad_refound: usize,
    pub bank_good: usize,
    pub bank_bad: usize,
    pub metrics: ModelMetrics,
    pub stop: StopDecision,
}

/// A fitted iteration that has not been written to the bank yet.
#[derive(Debug, Clone)]
pub struct TrainedIteration<S> {
    pub iteration: usize,
    pub model: TopicModel<S>,
    pub stats: TrainStats,
    pub qualities: Vec<TopicQuality>,
    /// Automatic labels of the free topics.
    pub auto_labels: Vec<(usize, TopicLabel)>,
}

/// Cosine similarity of two equal-length vectors, 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub const REFOUND_COSINE: f64 = 0.9;

/// Builds, fits and evaluates the model of `iteration` against `bank`.
pub fn train_iteration<S: Scalar>(
    bank: &TopicBank,
    cfg: &ItarConfig,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    iteration: usize,
) -> Result<TrainedIteration<S>, ItarError> {
    train_iteration_observed(bank, cfg, corpus, cooc, iteration, |_, _| {})
}

/// Like [`train_iteration`], calling `observe` after every EM sweep.
pub fn train_iteration_observed<S: Scalar, F>(
    bank: &TopicBank,
    cfg: &ItarConfig,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    iteration: usize,
    observe: F,
) -> Result<TrainedIteration<S>, ItarError>
where
    F: FnMut(usize, &TopicModel<S>),
{
    cfg.validate()?;
    let good = bank.good_columns::<S>();
    let bad = bank.columns::<S>(BankLabel::Bad);
    let fixed: &[(String, Vec<S>)] = if cfg.ablation_flags.fix_good { &good } else { &[] };
    if fixed.len() >= cfg.topics {
        return Err(ItarError::BankTooLarge { good: fixed.len(), topics: cfg.topics });
    }
    let mut roles: Vec<TopicRole> =
        fixed.iter().map(|(id, _)| TopicRole::Fixed { bank_ref: id.clone() }).collect();
    roles.resize(cfg.topics, TopicRole::Domain);
    roles.extend(std::iter::repeat_n(TopicRole::Background, cfg.background_topics));

    let mut model = init_model::<S>(
        corpus.num_tokens(),
        roles.len(),
        corpus.num_documents(),
        iteration as u64,
        roles.clone(),
    )?;
    for (t, (_, column)) in fixed.iter().enumerate() {
        if column.len() != corpus.num_tokens() {
            return Err(BankError::ColumnLength(format!("fixed topic {t}"), column.len(), corpus.num_tokens()).into());
        }
        for (w, &v) in column.iter().enumerate() {
            model.phi[[w, t]] = v;
        }
    }

    let configs = cfg.regularizers(!fixed.is_empty(), !bad.is_empty(), !good.is_empty());
    let ctx = ResolveContext::new(corpus.num_tokens(), corpus.num_documents(), corpus.total_tokens(), &roles)
        .with_bank(&good, &bad);
    let regularizers = build_all(&configs, &ctx)?;
    let stats = em_fit_observed(
        &mut model,
        corpus,
        &regularizers,
        EmOptions { iterations: cfg.em_iterations, workers: cfg.workers },
        observe,
    )?;
    let prior = corpus.has_sequences().then_some(cfg.topic_prior);
    if prior.is_none() && cfg.quality_criterion == QualityCriterion::Intratext {
        return Err(ItarError::Config("intratext criterion needs a corpus with sequences".into()));
    }
    let qualities = metrics::evaluate_topics(&model, corpus, cooc, cfg.top_words, prior)?;
    let auto_labels =
        classify_topics(&model, &qualities, &cfg.thresholds, cfg.quality_criterion, &BTreeMap::new());
    Ok(TrainedIteration { iteration, model, stats, qualities, auto_labels })
}

/// Applies labels (automatic unless overridden), updates the bank and
/// decides whether to stop.
pub fn finish_iteration<S: Scalar>(
    trained: &TrainedIteration<S>,
    bank: &mut TopicBank,
    cfg: &ItarConfig,
    corpus: &Corpus,
    overrides: &BTreeMap<usize, TopicLabel>,
) -> Result<(IterationRecord, Vec<BankEntry>), ItarError> {
    let model = &trained.model;
    let labels = classify_topics(model, &trained.qualities, &cfg.thresholds, cfg.quality_criterion, overrides);
    let previous_bad: Vec<Vec<f64>> = bank.columns::<f64>(BankLabel::Bad);
    let added = update_bank(bank, model, &labels, &trained.qualities, cfg.quality_criterion, trained.iteration)?;
    let bad_refound = added
        .iter()
        .filter(|e| e.label == BankLabel::Bad)
        .filter(|e| previous_bad.iter().any(|b| cosine(b, &e.column) >= REFOUND_COSINE))
        .count();
    let metrics = model_metrics(model, corpus, &trained.qualities, &cfg.thresholds, cfg.quality_criterion, Some(&labels))?;
    let stop = check_stopping(bank, model, &trained.qualities, cfg);
    let auto: BTreeMap<usize, TopicLabel> = trained.auto_labels.iter().copied().collect();
    let record = IterationRecord {
        iteration: trained.iteration,
        seed: model.seed,
        fixed_topics: model.roles.iter().filter(|r| r.is_fixed()).count(),
        labels: labels
            .iter()
            .map(|&(t, label)| TopicLabelRecord {
                topic: t,
                label,
                auto_label: auto[&t],
                coherence: trained.qualities[t].coherence(cfg.quality_criterion),
                degenerate: trained.qualities[t].degenerate,
            })
            .collect(),
        good_added: added.iter().filter(|e| e.label == BankLabel::Good).count(),
        bad_added: added.iter().filter(|e| e.label == BankLabel::Bad).count(),
        bad_refound,
        bank_good: bank.good_count(),
        bank_bad: bank.bad_count(),
        metrics,
        stop,
    };
    Ok((record, added))
}

/// One automatic iteration.
pub fn run_iteration<S: Scalar>(
    bank: &mut TopicBank,
    cfg: &ItarConfig,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    iteration: usize,
) -> Result<(TrainedIteration<S>, IterationRecord), ItarError> {
    let trained = train_iteration(bank, cfg, corpus, cooc, iteration)?;
    let (record, _) = finish_iteration(&trained, bank, cfg, corpus, &BTreeMap::new())?;
    Ok((trained, record))
}

#[derive(Debug, Clone)]
pub struct ItarOutcome<S> {
    pub model: TopicModel<S>,
    pub qualities: Vec<TopicQuality>,
    pub bank: TopicBank,
    pub history: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

pub fn run_itar<S: Scalar>(
    cfg: &ItarConfig,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
) -> Result<ItarOutcome<S>, ItarError> {
    run_itar_observed(cfg, corpus, cooc, |_, _| {})
}

/// Like [`run_itar`], calling `observe` after every iteration.
pub fn run_itar_observed<S: Scalar, F>(
    cfg: &ItarConfig,
    corpus: &Corpus,
    cooc: &CooccurrenceStats,
    mut observe: F,
) -> Result<ItarOutcome<S>, ItarError>
where
    F: FnMut(&TrainedIteration<S>, &IterationRecord),
{
    cfg.validate()?;
    if cfg.max_iterations == 0 {
        return Err(ItarError::Config("max_iterations must be positive".into()));
    }
    let mut bank = TopicBank::new();
    let mut history = Vec::new();
    let mut last = None;
    let mut stop_reason = StopReason::MaxIterations;
    for iteration in 0..cfg.max_iterations {
        let (trained, record) = run_iteration::<S>(&mut bank, cfg, corpus, cooc, iteration)?;
        observe(&trained, &record);
        log::info!(
            "iteration {iteration}: +{} good, +{} bad, bank {} good",
            record.good_added,
            record.bad_added,
            record.bank_good
        );
        let stop = record.stop.clone();
        history.push(record);
        last = Some(trained);
        if let StopDecision::Stop(reason) = stop {
            stop_reason = reason;
            break;
        }
    }
    let last = last.expect("at least one iteration ran");
    Ok(ItarOutcome { model: last.model, qualities: last.qualities, bank, history, stop_reason })
}

#[cfg(test)]
mod tests;
