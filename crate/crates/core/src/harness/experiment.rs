//! End-to-end experiment: series, thresholds, iterative models, files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::generate_report;
use super::series::{pool_coherences, run_series, ModelResult, RunRecord, SeriesOptions};
use super::topicbank::{bank_perplexity, bank_phi, run_topicbank, TopicBankConfig, TopicBankIteration, TopicBankVariant};
use super::{ModelName, ModelSpec};
use crate::corpus::{build_cooccurrence, Corpus, Vocabulary};
use crate::itar::{
    compute_thresholds, run_itar_observed, Ablation, BaseCoefficients, IterationRecord, ItarConfig, ItarError,
    Thresholds, TopicBank,
};
use crate::metrics::{QualityCriterion, TopicPrior, DEFAULT_TOP_WORDS};
use crate::regularizers::SiftVersion;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Itar(#[from] ItarError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl ExperimentError {
    /// True for errors caused by the degenerate-model guard.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            ExperimentError::Itar(ItarError::Model(crate::model::ModelError::NonFiniteAdditive { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    Pooled,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub toptoken: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra: Option<Thresholds>,
}

impl ThresholdPair {
    /// Thresholds of `criterion`; intra-text falls back to top-token when
    /// no intra-text thresholds were computed.
    pub fn get(&self, criterion: QualityCriterion) -> &Thresholds {
        match criterion {
            QualityCriterion::Toptoken => &self.toptoken,
            QualityCriterion::Intratext => self.intra.as_ref().unwrap_or(&self.toptoken),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    #[serde(default)]
    pub mode: ThresholdMode,
    /// Models whose topics are pooled. Empty: the ARTM-family non-iterative
    /// models of the experiment, or lda, sparse and decorr if it has none.
    #[serde(default)]
    pub pool_models: Vec<ModelName>,
    #[serde(default)]
    pub include_plsa: bool,
    /// Runs of pool models that are not part of the experiment.
    #[serde(default = "default_pool_runs")]
    pub pool_runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<ThresholdPair>,
}

fn default_pool_runs() -> usize {
    20
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { mode: ThresholdMode::Pooled, pool_models: Vec::new(), include_plsa: false, pool_runs: 20, fixed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItarSection {
    pub max_iterations: usize,
    pub tau_fix: f64,
    pub tau_sift_v1: f64,
    pub tau_sift_v2: f64,
    pub stop_good_fraction: f64,
    pub base: BaseCoefficients,
    pub topicbank_base: ModelName,
}

impl Default for ItarSection {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            tau_fix: 1e9,
            tau_sift_v1: 1e5,
            tau_sift_v2: 1e8,
            stop_good_fraction: 0.9,
            base: BaseCoefficients::default(),
            topicbank_base: ModelName::Plsa,
        }
    }
}

fn default_em_iterations() -> usize {
    30
}
fn default_top_words() -> usize {
    DEFAULT_TOP_WORDS
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub itar: ItarSection,
    #[serde(default)]
    pub criterion: QualityCriterion,
    #[serde(default = "default_em_iterations")]
    pub em_iterations: usize,
    #[serde(default = "default_top_words")]
    pub top_words: usize,
    #[serde(default)]
    pub topic_prior: TopicPrior,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(models: Vec<ModelSpec>) -> Self {
        Self {
            corpus: None,
            models,
            thresholds: ThresholdConfig::default(),
            itar: ItarSection::default(),
            criterion: QualityCriterion::Toptoken,
            em_iterations: default_em_iterations(),
            top_words: default_top_words(),
            topic_prior: TopicPrior::default(),
            workers: default_workers(),
            output_dir: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_owned(), source })?;
        serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_owned(), source })
    }

    pub fn series_options(&self) -> SeriesOptions {
        SeriesOptions {
            em_iterations: self.em_iterations,
            top_words: self.top_words,
            topic_prior: self.topic_prior,
            workers: self.workers,
        }
    }

    /// The ITAR configuration of an `itar`/`itar2` model.
    pub fn itar_config(&self, spec: &ModelSpec, thresholds: Thresholds) -> ItarConfig {
        let section = &self.itar;
        let (version, tau) = match spec.name {
            ModelName::Itar2 => (SiftVersion::V2, section.tau_sift_v2),
            _ => (SiftVersion::V1, section.tau_sift_v1),
        };
        let mut cfg = ItarConfig::new(spec.topics, thresholds);
        cfg.background_topics = spec.background();
        cfg.max_iterations = section.max_iterations;
        cfg.em_iterations = self.em_iterations;
        cfg.base = section.base;
        cfg.tau_fix = section.tau_fix;
        cfg.tau_sift_bad = tau;
        cfg.tau_sift_good = tau;
        cfg.sift_version = version;
        cfg.ablation_flags = spec.ablation.unwrap_or_default();
        cfg.stop_good_fraction = section.stop_good_fraction;
        cfg.quality_criterion = self.criterion;
        cfg.top_words = self.top_words;
        cfg.topic_prior = self.topic_prior;
        cfg.workers = self.workers;
        cfg
    }

    fn validate(&self, corpus: &Corpus) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        if self.models.is_empty() {
            return fail("no models".into());
        }
        if self.criterion == QualityCriterion::Intratext && !corpus.has_sequences() {
            return fail("intratext criterion needs a corpus with sequences".into());
        }
        let mut names = BTreeSet::new();
        for spec in &self.models {
            if spec.topics == 0 || (spec.runs == 0 && !spec.name.is_iterative()) {
                return fail(format!("{}: T and runs must be positive", spec.display_name()));
            }
            if !names.insert(spec.display_name()) {
                return fail(format!("duplicate model name {}", spec.display_name()));
            }
        }
        if self.thresholds.mode == ThresholdMode::Fixed && self.thresholds.fixed.is_none() {
            return fail("fixed threshold mode without thresholds".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub criterion: QualityCriterion,
    /// Thresholds by number of topics.
    pub thresholds: BTreeMap<usize, ThresholdPair>,
    pub models: Vec<ModelResult>,
}

/// Files of an iterative model besides its metrics.
#[derive(Debug, Clone)]
pub struct ModelArtifacts {
    pub name: String,
    pub bank: TopicBank,
    pub history: Vec<IterationRecord>,
    pub topicbank_history: Vec<TopicBankIteration>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub results: ExperimentResults,
    pub artifacts: Vec<ModelArtifacts>,
}

fn pool_set(cfg: &ExperimentConfig) -> Vec<ModelName> {
    if !cfg.thresholds.pool_models.is_empty() {
        return cfg.thresholds.pool_models.clone();
    }
    let pooled = |n: ModelName| n.pools_by_default() || (cfg.thresholds.include_plsa && n == ModelName::Plsa);
    let mut set: Vec<ModelName> = cfg.models.iter().map(|s| s.name).filter(|&n| pooled(n)).collect();
    if set.is_empty() {
        set = vec![ModelName::Lda, ModelName::Sparse, ModelName::Decorr];
        if cfg.thresholds.include_plsa {
            set.insert(0, ModelName::Plsa);
        }
    }
    set.dedup();
    set
}

fn thresholds_from(results: &[&ModelResult], with_intra: bool) -> Result<ThresholdPair, ExperimentError> {
    let source = results.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join("+");
    let pooled = |criterion| -> Result<Thresholds, ExperimentError> {
        let pool = pool_coherences(results.iter().copied(), criterion);
        let mut th = compute_thresholds(&pool).map_err(ItarError::from)?;
        th.source = format!("{} of {source}", th.source);
        Ok(th)
    };
    Ok(ThresholdPair {
        toptoken: pooled(QualityCriterion::Toptoken)?,
        intra: if with_intra { Some(pooled(QualityCriterion::Intratext)?) } else { None },
    })
}

/// Runs every model of `cfg` on `corpus`.
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate(corpus)?;
    let cooc = build_cooccurrence(corpus);
    let opts = cfg.series_options();

    let mut series: Vec<Option<ModelResult>> = Vec::with_capacity(cfg.models.len());
    for spec in &cfg.models {
        series.push(if spec.name.is_iterative() {
            None
        } else {
            log::info!("series {} (T={}, {} runs)", spec.display_name(), spec.topics, spec.runs);
            Some(run_series::<S>(spec, corpus, &cooc, &opts)?)
        });
    }

    let topic_counts: BTreeSet<usize> = cfg.models.iter().map(|s| s.topics).collect();
    let mut thresholds = BTreeMap::new();
    for &t in &topic_counts {
        let pair = match cfg.thresholds.mode {
            ThresholdMode::Fixed => cfg.thresholds.fixed.clone().expect("validated"),
            ThresholdMode::Pooled => {
                let mut extra = Vec::new();
                let mut pooled: Vec<&ModelResult> = Vec::new();
                let set = pool_set(cfg);
                for &name in &set {
                    let existing = cfg.models.iter().zip(&series).find(|(s, r)| {
                        s.name == name && s.topics == t && s.regularizers.is_none() && r.is_some()
                    });
                    if existing.is_none() {
                        let spec = ModelSpec::new(name, t).runs(cfg.thresholds.pool_runs);
                        log::info!("pool series {name} (T={t})");
                        extra.push(run_series::<S>(&spec, corpus, &cooc, &opts)?);
                    }
                }
                for &name in &set {
                    if let Some((_, Some(r))) = cfg.models.iter().zip(&series).find(|(s, r)| {
                        s.name == name && s.topics == t && s.regularizers.is_none() && r.is_some()
                    }) {
                        pooled.push(r);
                    }
                }
                pooled.extend(extra.iter());
                thresholds_from(&pooled, corpus.has_sequences())?
            }
        };
        log::info!("T={t}: good >= {:.4}, bad <= {:.4}", pair.toptoken.theta_good, pair.toptoken.theta_bad);
        thresholds.insert(t, pair);
    }

    let mut models = Vec::with_capacity(cfg.models.len());
    let mut artifacts = Vec::new();
    for (spec, result) in cfg.models.iter().zip(series) {
        if let Some(result) = result {
            models.push(result);
            continue;
        }
        let th = thresholds[&spec.topics].get(cfg.criterion).clone();
        match spec.name {
            ModelName::Itar | ModelName::Itar2 => {
                let itar_cfg = cfg.itar_config(spec, th);
                let mut runs = Vec::new();
                let mut failure = None;
                let outcome = run_itar_observed::<S, _>(&itar_cfg, corpus, &cooc, |trained, _| {
                    if failure.is_none() {
                        match RunRecord::from_model(&trained.model, corpus, &trained.qualities) {
                            Ok(r) => runs.push(r),
                            Err(e) => failure = Some(e),
                        }
                    }
                })?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                models.push(ModelResult {
                    name: spec.display_name(),
                    kind: spec.name,
                    topics: spec.topics,
                    runs,
                    max_iterations: Some(itar_cfg.max_iterations),
                    bank_bad: Some(outcome.bank.bad_count()),
                    bad_refound: Some(outcome.history.iter().map(|r| r.bad_refound).sum()),
                    bank_perplexity: None,
                });
                artifacts.push(ModelArtifacts {
                    name: spec.display_name(),
                    bank: outcome.bank,
                    history: outcome.history,
                    topicbank_history: Vec::new(),
                });
            }
            ModelName::Topicbank | ModelName::Topicbank2 => {
                let variant = if spec.name == ModelName::Topicbank {
                    TopicBankVariant::PerModel
                } else {
                    TopicBankVariant::Shared
                };
                let mut tb = TopicBankConfig::new(variant, spec.topics, th);
                let mut base = ModelSpec::new(spec.base.unwrap_or(cfg.itar.topicbank_base), spec.topics);
                base.regularizers = spec.regularizers.clone();
                base.background_topics = spec.background_topics;
                tb.base = base;
                tb.iterations = cfg.itar.max_iterations;
                tb.criterion = cfg.criterion;
                let outcome = run_topicbank::<S>(&tb, corpus, &cooc, &opts)?;
                let bank_ppl = if outcome.bank.is_empty() {
                    None
                } else {
                    let phi = bank_phi::<S>(&outcome.bank, corpus.num_tokens());
                    let with = bank_perplexity(&phi, corpus, true, tb.inference_iterations).map_err(ItarError::from)?;
                    let without =
                        bank_perplexity(&phi, corpus, false, tb.inference_iterations).map_err(ItarError::from)?;
                    Some([with, without])
                };
                let runs: Vec<RunRecord> = outcome
                    .records
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, r)| r.map(|r| RunRecord { seed: i as u64, ..r }))
                    .collect();
                models.push(ModelResult {
                    name: spec.display_name(),
                    kind: spec.name,
                    topics: spec.topics,
                    runs,
                    max_iterations: Some(tb.iterations),
                    bank_bad: None,
                    bad_refound: None,
                    bank_perplexity: bank_ppl,
                });
                artifacts.push(ModelArtifacts {
                    name: spec.display_name(),
                    bank: outcome.bank,
                    history: Vec::new(),
                    topicbank_history: outcome.history,
                });
            }
            _ => unreachable!("series models handled above"),
        }
    }
    Ok(ExperimentOutput { results: ExperimentResults { criterion: cfg.criterion, thresholds, models }, artifacts })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io { path: path.to_owned(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn save_results(results: &ExperimentResults, path: &Path) -> Result<(), ExperimentError> {
    let json = serde_json::to_string_pretty(results).expect("results serialize");
    write_file(path, (json + "\n").as_bytes())
}

pub fn load_results(path: &Path) -> Result<ExperimentResults, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_owned(), source })
}

/// History records as JSON lines.
pub fn history_jsonl(history: &[IterationRecord]) -> String {
    history.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
}

/// Writes `results.json`, per-model bank and history files and the report
/// directory under `dir`.
pub fn write_outputs(output: &ExperimentOutput, vocabulary: &Vocabulary, dir: &Path) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io { path: dir.to_owned(), source };
    fs::create_dir_all(dir).map_err(io)?;
    save_results(&output.results, &dir.join("results.json"))?;
    for a in &output.artifacts {
        write_file(&dir.join(format!("{}.bank.jsonl", a.name)), a.bank.to_jsonl(vocabulary).as_bytes())?;
        if !a.history.is_empty() {
            write_file(&dir.join(format!("{}.history.jsonl", a.name)), history_jsonl(&a.history).as_bytes())?;
        }
        if !a.topicbank_history.is_empty() {
            let lines: String = a
                .topicbank_history
                .iter()
                .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
                .collect();
            write_file(&dir.join(format!("{}.history.jsonl", a.name)), lines.as_bytes())?;
        }
    }
    generate_report(&output.results, &dir.join("report")).map_err(io)
}

/// The eight ablation variants of `itar` at `topics`.
pub fn ablation_specs(topics: usize) -> Vec<ModelSpec> {
    Ablation::all().into_iter().map(|a| ModelSpec::new(ModelName::Itar, topics).ablation(a)).collect()
}
