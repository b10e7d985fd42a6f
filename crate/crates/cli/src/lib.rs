//! The `itar` command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 the model
//! degenerated and training was aborted.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use itar_core::corpus::{build_cooccurrence, parse_bow, parse_sequences, read_corpus, write_corpus, Corpus, CorpusError};
use itar_core::harness::synth::{synth_corpus, SynthConfig};
use itar_core::harness::{
    bank_perplexity, bank_phi, generate_report, history_jsonl, load_results, pool_coherences, run_experiment,
    run_series, run_topicbank, train_run, write_outputs, ExperimentConfig, ExperimentError, ModelName, ModelSpec,
    SeriesOptions, TopicBankConfig, TopicBankVariant,
};
use itar_core::itar::{compute_thresholds, run_itar, Ablation, ItarConfig, ItarError, LabelingMode, Thresholds};
use itar_core::metrics::{self, evaluate_topics, MetricError, QualityCriterion, TopicPrior};
use itar_core::model::{infer_theta_fixed_phi, init_model, normalize_columns, ModelError, TopicModel};
use itar_core::persist::{read_phi_tsv, write_phi_tsv, write_theta_tsv, PersistError};
use itar_core::regularizers::SiftVersion;
use itar_core::Scalar;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidFilter(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteAdditive(_) | ModelError::ZeroPhi => CliError::Degenerate(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Model(m) => m.into(),
            MetricError::TooFewTopics(_) | MetricError::EmptyBank => CliError::Degenerate(e.to_string()),
            MetricError::MissingSequences => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ItarError> for CliError {
    fn from(e: ItarError) -> Self {
        match e {
            ItarError::Model(m) => m.into(),
            ItarError::Metric(m) => m.into(),
            ItarError::Config(_) | ItarError::BankTooLarge { .. } | ItarError::Regularizer(_) => {
                CliError::Config(e.to_string())
            }
            ItarError::Bank(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) => CliError::Config(e.to_string()),
            ExperimentError::Itar(inner) => inner.into(),
            ExperimentError::Io { .. } | ExperimentError::Json { .. } => CliError::Data(e.to_string()),
        }
    }
}

fn data_io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "itar", version, about = "Topic models with iterative topic accumulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a text corpus, filter the vocabulary and write the binary format.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with known topics.
    Synth(SynthArgs),
    /// Pool topic coherences of baseline series into good/bad thresholds.
    Thresholds(ThresholdsArgs),
    /// Train one non-iterative model.
    Train(TrainArgs),
    /// Run the iterative accumulation loop.
    Itar(ItarArgs),
    /// Run the TopicBank baseline.
    Topicbank(TopicBankArgs),
    /// Score a Φ matrix on a corpus.
    Evaluate(EvaluateArgs),
    /// Run a full experiment described by a config file.
    Experiment(ExperimentArgs),
    /// Regenerate report tables from a results file.
    Report(ReportArgs),
    /// Serve an interactive labeling session.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false)]
pub struct CorpusSource {
    /// Bag-of-words file: `doc_id token:count ...` per line.
    #[arg(long, group = "source")]
    pub bow: Option<PathBuf>,
    /// Sequence file: `doc_id<TAB>tokens in order` per line.
    #[arg(long, group = "source")]
    pub seq: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub source: CorpusSource,
    #[arg(long, default_value_t = 1)]
    pub df_min: u32,
    /// Maximum document frequency as a fraction of documents.
    #[arg(long, default_value_t = 1.0)]
    pub df_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub tokens: usize,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 200)]
    pub documents: usize,
    #[arg(long, default_value_t = 100.0)]
    pub mean_len: f64,
    #[arg(long, default_value_t = 0.2)]
    pub concentration: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generating Φ as TSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CommonModelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long = "t")]
    pub topics: Option<usize>,
    #[arg(long)]
    pub em_iters: Option<usize>,
    #[arg(long)]
    pub top_words: Option<usize>,
    #[arg(long, value_enum)]
    pub criterion: Option<Criterion>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Criterion {
    Toptoken,
    Intratext,
}

impl From<Criterion> for QualityCriterion {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::Toptoken => QualityCriterion::Toptoken,
            Criterion::Intratext => QualityCriterion::Intratext,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct ThresholdsArgs {
    #[command(flatten)]
    pub common: CommonModelArgs,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Models whose topics are pooled.
    #[arg(long, value_delimiter = ',', default_value = "lda,sparse,decorr")]
    pub models: Vec<String>,
    #[arg(long)]
    pub include_plsa: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonModelArgs,
    #[arg(long, default_value = "plsa")]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ItarArgs {
    #[command(flatten)]
    pub common: CommonModelArgs,
    /// ITAR config (JSON); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub sift: Option<SiftVersion>,
    #[arg(long)]
    pub tau_sift: Option<f64>,
    #[arg(long)]
    pub tau_fix: Option<f64>,
    /// Flags `fix-bad-good`, e.g. `1-0-1`.
    #[arg(long)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub out: PathBuf,
    /// Wait for labels from the review service instead of labeling automatically.
    #[arg(long)]
    pub interactive: bool,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TopicBankArgs {
    #[command(flatten)]
    pub common: CommonModelArgs,
    /// `topicbank` (per-model percentile) or `topicbank2` (shared threshold).
    #[arg(long, default_value = "topicbank")]
    pub variant: String,
    #[arg(long, default_value = "plsa")]
    pub base: String,
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    #[arg(long)]
    pub thresholds: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub top_words: usize,
    /// EM sweeps used to infer Θ for the fixed Φ.
    #[arg(long, default_value_t = 100)]
    pub inference_iters: usize,
    /// Written to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub session_dir: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// ITAR config (JSON) for a new session.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Thresholds(a) => thresholds(a),
        Command::Train(a) => match a.precision {
            Precision::F32 => train::<f32>(a),
            Precision::F64 => train::<f64>(a),
        },
        Command::Itar(a) => itar(a),
        Command::Topicbank(a) => topicbank(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(read_corpus(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(data_io(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(data_io(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Data(e.to_string()))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(data_io(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(data_io(path))
}

fn read_config_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn model_name(s: &str) -> Result<ModelName, CliError> {
    s.parse().map_err(|e: String| CliError::Config(e))
}

fn series_options(common: &CommonModelArgs) -> SeriesOptions {
    let mut opts = SeriesOptions { workers: common.workers, ..SeriesOptions::default() };
    if let Some(n) = common.em_iters {
        opts.em_iterations = n;
    }
    if let Some(k) = common.top_words {
        opts.top_words = k;
    }
    opts
}

fn require_topics(common: &CommonModelArgs) -> Result<usize, CliError> {
    match common.topics {
        Some(0) | None => Err(CliError::Config("--t must be a positive number of topics".into())),
        Some(t) => Ok(t),
    }
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let corpus = match (&a.source.bow, &a.source.seq) {
        (Some(p), _) => parse_bow(p)?,
        (_, Some(p)) => parse_sequences(p)?,
        _ => unreachable!("clap requires one source"),
    };
    let filtered = corpus.filter_vocabulary(a.df_min, a.df_max)?;
    write_corpus(&filtered, &a.out)?;
    println!(
        "{} documents, {} tokens, vocabulary {} (from {})",
        filtered.num_documents(),
        filtered.total_tokens(),
        filtered.num_tokens(),
        corpus.num_tokens()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        seed: a.seed,
        num_tokens: a.tokens,
        num_topics: a.topics,
        num_documents: a.documents,
        mean_len: a.mean_len,
        concentration: a.concentration,
        ..SynthConfig::small(a.seed)
    };
    let synth = synth_corpus(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    write_corpus(&synth.corpus, &a.out)?;
    if let Some(path) = &a.truth {
        let names: Vec<String> = (0..a.topics).map(|t| format!("true_{t}")).collect();
        let mut out = create(path)?;
        write_phi_tsv(&mut out, &synth.phi, synth.corpus.vocabulary(), &names).map_err(data_io(path))?;
        out.flush().map_err(data_io(path))?;
    }
    println!("{} documents, {} tokens", synth.corpus.num_documents(), synth.corpus.total_tokens());
    Ok(())
}

fn thresholds(a: ThresholdsArgs) -> Result<(), CliError> {
    let topics = require_topics(&a.common)?;
    let criterion: QualityCriterion = a.common.criterion.map_or(QualityCriterion::Toptoken, Into::into);
    let corpus = load_corpus(&a.common.corpus)?;
    if criterion == QualityCriterion::Intratext && !corpus.has_sequences() {
        return Err(CliError::Config("intratext criterion needs a corpus with sequences".into()));
    }
    let cooc = build_cooccurrence(&corpus);
    let opts = series_options(&a.common);
    let mut names = a.models.iter().map(|m| model_name(m)).collect::<Result<Vec<_>, _>>()?;
    if a.include_plsa && !names.contains(&ModelName::Plsa) {
        names.push(ModelName::Plsa);
    }
    let mut series = Vec::new();
    for name in names {
        series.push(run_series::<f64>(&ModelSpec::new(name, topics).runs(a.runs), &corpus, &cooc, &opts)?);
    }
    let pool = pool_coherences(series.iter(), criterion);
    let th = compute_thresholds(&pool)?;
    write_json(&a.out, &th)?;
    println!("good >= {:.6}, bad <= {:.6} ({})", th.theta_good, th.theta_bad, th.source);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub topic: String,
    pub top_words: Vec<String>,
    pub coh_toptoken: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coh_intra: Option<f64>,
    pub n_t: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub ppl: f64,
    pub diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelReport,
    pub topics: Vec<TopicReport>,
}

fn evaluation<S: Scalar>(
    model: &TopicModel<S>,
    corpus: &Corpus,
    qualities: &[metrics::TopicQuality],
) -> Result<EvaluationReport, CliError> {
    let vocab = corpus.vocabulary();
    let names = model.topic_names();
    let live: Vec<usize> = model.subject_topics().into_iter().filter(|&t| !qualities[t].degenerate).collect();
    let diversity = match metrics::diversity(&model.phi, &live) {
        Ok(d) => Some(d),
        Err(MetricError::TooFewTopics(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(EvaluationReport {
        model: ModelReport { ppl: metrics::model_perplexity(model, corpus)?, diversity },
        topics: qualities
            .iter()
            .map(|q| TopicReport {
                topic: names[q.topic].clone(),
                top_words: q.top_words.iter().map(|&w| vocab.surface(w).to_owned()).collect(),
                coh_toptoken: q.coherence_toptoken,
                coh_intra: q.coherence_intra,
                n_t: q.size,
                degenerate: q.degenerate,
            })
            .collect(),
    })
}

fn write_model<S: Scalar>(dir: &Path, model: &TopicModel<S>, corpus: &Corpus) -> Result<(), CliError> {
    let names = model.topic_names();
    let phi_path = dir.join("phi.tsv");
    let mut out = create(&phi_path)?;
    write_phi_tsv(&mut out, &model.phi, corpus.vocabulary(), &names).map_err(data_io(&phi_path))?;
    out.flush().map_err(data_io(&phi_path))?;
    let theta_path = dir.join("theta.tsv");
    let mut out = create(&theta_path)?;
    write_theta_tsv(&mut out, &model.theta, corpus, &names).map_err(data_io(&theta_path))?;
    out.flush().map_err(data_io(&theta_path))
}

fn train<S: Scalar>(a: TrainArgs) -> Result<(), CliError> {
    let topics = require_topics(&a.common)?;
    let name = model_name(&a.model)?;
    if name.is_iterative() {
        return Err(CliError::Config(format!("{name} is iterative; use the `itar` or `topicbank` subcommand")));
    }
    let corpus = load_corpus(&a.common.corpus)?;
    let cooc = build_cooccurrence(&corpus);
    let spec = ModelSpec::new(name, topics);
    let (model, qualities) = train_run::<S>(&spec, &corpus, &cooc, a.seed, &series_options(&a.common))?;
    if model.subject_topics().iter().all(|&t| qualities[t].degenerate) {
        return Err(CliError::Degenerate("every topic collapsed to zero".into()));
    }
    write_model(&a.out, &model, &corpus)?;
    let report = evaluation(&model, &corpus, &qualities)?;
    write_json(&a.out.join("topics.json"), &report)?;
    println!("{}: perplexity {:.4}", spec.display_name(), report.model.ppl);
    Ok(())
}

/// The ITAR config from `--config` (if any) with command-line overrides.
pub fn itar_config(a: &ItarArgs) -> Result<ItarConfig, CliError> {
    let mut value = match &a.config {
        Some(path) => read_config_json::<Value>(path)?,
        None => Value::Object(Default::default()),
    };
    let obj = value.as_object_mut().ok_or_else(|| CliError::Config("ITAR config must be a JSON object".into()))?;
    if let Some(t) = a.common.topics {
        obj.insert("T".into(), t.into());
    }
    if let Some(path) = &a.thresholds {
        obj.insert("thresholds".into(), read_config_json::<Value>(path)?);
    }
    let mut cfg: ItarConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("ITAR config: {e}")))?;
    if let Some(n) = a.max_iters {
        cfg.max_iterations = n;
    }
    if let Some(n) = a.common.em_iters {
        cfg.em_iterations = n;
    }
    if let Some(k) = a.common.top_words {
        cfg.top_words = k;
    }
    if let Some(c) = a.common.criterion {
        cfg.quality_criterion = c.into();
    }
    if let Some(v) = a.sift {
        cfg.sift_version = v;
    }
    if let Some(tau) = a.tau_sift {
        cfg.tau_sift_bad = tau;
        cfg.tau_sift_good = tau;
    }
    if let Some(tau) = a.tau_fix {
        cfg.tau_fix = tau;
    }
    if let Some(flags) = a.ablation {
        cfg.ablation_flags = flags;
    }
    if a.interactive {
        cfg.labeling_mode = LabelingMode::Interactive;
    }
    cfg.workers = a.common.workers;
    cfg.validate()?;
    if cfg.max_iterations == 0 {
        return Err(CliError::Config("max_iterations must be positive".into()));
    }
    Ok(cfg)
}

fn itar(a: ItarArgs) -> Result<(), CliError> {
    let cfg = itar_config(&a)?;
    let corpus = load_corpus(&a.common.corpus)?;
    if cfg.quality_criterion == QualityCriterion::Intratext && !corpus.has_sequences() {
        return Err(CliError::Config("intratext criterion needs a corpus with sequences".into()));
    }
    if a.interactive {
        let spec = itar_service::SessionSpec { corpus: a.common.corpus.clone(), config: cfg };
        return serve_session(a.port, a.out, Some(spec), a.static_dir);
    }
    let cooc = build_cooccurrence(&corpus);
    let out = run_itar::<f64>(&cfg, &corpus, &cooc)?;
    fs::create_dir_all(&a.out).map_err(data_io(&a.out))?;
    out.bank.save(a.out.join("bank.jsonl"), corpus.vocabulary()).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(&a.out.join("history.jsonl"), &history_jsonl(&out.history))?;
    write_model(&a.out, &out.model, &corpus)?;
    write_json(&a.out.join("topics.json"), &evaluation(&out.model, &corpus, &out.qualities)?)?;
    println!(
        "{}: stopped after {} iterations ({}), bank {} good / {} bad",
        cfg.ablation_flags.model_name(),
        out.history.len(),
        out.stop_reason,
        out.bank.good_count(),
        out.bank.bad_count()
    );
    Ok(())
}

fn topicbank(a: TopicBankArgs) -> Result<(), CliError> {
    let topics = require_topics(&a.common)?;
    let variant = match model_name(&a.variant)? {
        ModelName::Topicbank => TopicBankVariant::PerModel,
        ModelName::Topicbank2 => TopicBankVariant::Shared,
        other => return Err(CliError::Config(format!("{other} is not a TopicBank variant"))),
    };
    let th: Thresholds = read_config_json(&a.thresholds)?;
    let mut cfg = TopicBankConfig::new(variant, topics, th);
    cfg.base = ModelSpec::new(model_name(&a.base)?, topics);
    cfg.iterations = a.iterations;
    if let Some(c) = a.common.criterion {
        cfg.criterion = c.into();
    }
    let corpus = load_corpus(&a.common.corpus)?;
    let cooc = build_cooccurrence(&corpus);
    let out = run_topicbank::<f64>(&cfg, &corpus, &cooc, &series_options(&a.common))?;
    fs::create_dir_all(&a.out).map_err(data_io(&a.out))?;
    out.bank.save(a.out.join("bank.jsonl"), corpus.vocabulary()).map_err(|e| CliError::Data(e.to_string()))?;
    let lines: String = out.history.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect();
    write_text(&a.out.join("history.jsonl"), &lines)?;
    if out.bank.is_empty() {
        return Err(CliError::Degenerate("no topic was banked".into()));
    }
    let phi = bank_phi::<f64>(&out.bank, corpus.num_tokens());
    let with_bg = bank_perplexity(&phi, &corpus, true, cfg.inference_iterations)?;
    let without = bank_perplexity(&phi, &corpus, false, cfg.inference_iterations)?;
    println!("bank of {} topics, perplexity {with_bg:.4}/{without:.4}", out.bank.len());
    Ok(())
}

/// Φ from `path` aligned to the corpus vocabulary. Tokens unknown to the
/// corpus are dropped and columns renormalized.
fn load_phi(path: &Path, corpus: &Corpus) -> Result<(Vec<String>, Array2<f64>), CliError> {
    let file = File::open(path).map_err(data_io(path))?;
    let (names, tokens, matrix) = read_phi_tsv(BufReader::new(file))?;
    let vocab = corpus.vocabulary();
    let mut phi = Array2::zeros((corpus.num_tokens(), names.len()));
    let mut dropped = 0;
    for (row, token) in tokens.iter().enumerate() {
        match vocab.id(token) {
            Some(w) => phi.row_mut(w as usize).assign(&matrix.row(row)),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} tokens of {} are not in the corpus vocabulary", path.display());
    }
    normalize_columns(&mut phi);
    Ok((names, phi))
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&a.corpus)?;
    let cooc = build_cooccurrence(&corpus);
    let (names, phi) = load_phi(&a.phi, &corpus)?;
    let theta = infer_theta_fixed_phi(&phi, &corpus, a.inference_iters, 1)?;
    let mut model = init_model::<f64>(corpus.num_tokens(), names.len(), corpus.num_documents(), 0, Vec::new())?;
    model.phi = phi;
    model.theta = theta;
    model.recompute_topic_sizes(&corpus);
    let prior = corpus.has_sequences().then_some(TopicPrior::default());
    let qualities = evaluate_topics(&model, &corpus, &cooc, a.top_words, prior)?;
    let mut report = evaluation(&model, &corpus, &qualities)?;
    for (t, name) in report.topics.iter_mut().zip(&names) {
        t.topic = name.clone();
    }
    match &a.out {
        Some(path) => write_json(path, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(())
        }
    }
}

fn experiment(a: ExperimentArgs) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = read_config_json(&a.config)?;
    if let Some(c) = a.corpus {
        cfg.corpus = Some(c);
    }
    if let Some(o) = a.out {
        cfg.output_dir = Some(o);
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let corpus_path = cfg.corpus.clone().ok_or_else(|| CliError::Config("no corpus given".into()))?;
    let out_dir = cfg.output_dir.clone().ok_or_else(|| CliError::Config("no output directory given".into()))?;
    let corpus = load_corpus(&corpus_path)?;
    let output = run_experiment::<f64>(&cfg, &corpus)?;
    write_outputs(&output, corpus.vocabulary(), &out_dir)?;
    println!("{} models written to {}", output.results.models.len(), out_dir.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let results = load_results(&a.results)?;
    generate_report(&results, &a.out).map_err(data_io(&a.out))
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let spec = match (a.corpus, a.config) {
        (Some(corpus), Some(config)) => {
            let mut config: ItarConfig = read_config_json(&config)?;
            config.labeling_mode = LabelingMode::Interactive;
            Some(itar_service::SessionSpec { corpus, config })
        }
        (None, None) => None,
        _ => return Err(CliError::Config("--corpus and --config must be given together".into())),
    };
    serve_session(a.port, a.session_dir, spec, a.static_dir)
}

fn serve_session(
    port: u16,
    session_dir: PathBuf,
    new_session: Option<itar_service::SessionSpec>,
    static_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    let opts = itar_service::ServeOptions { port, session_dir, new_session, static_dir };
    runtime.block_on(itar_service::serve(opts)).map_err(|e| CliError::Data(format!("{e:#}")))
}
