//! A labeling session: one ITAR loop driven by HTTP requests.
//!
//! On-disk layout of a session directory:
//!
//! - `session.json`: corpus path and [`ItarConfig`]
//! - `bank.jsonl`: the topic bank, appended after every finished iteration
//! - `history.jsonl`: one [`IterationRecord`] per finished iteration
//! - `labels.json`: present while a trained iteration awaits labels; holds
//!   the human overrides posted so far
//!
//! Training is deterministic given the bank and the iteration number, so a
//! restarted session retrains the pending iteration instead of storing Φ.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use itar_core::corpus::{build_cooccurrence, read_corpus, CooccurrenceStats, Corpus};
use itar_core::itar::{
    finish_iteration, train_iteration_observed, BankError, IterationRecord, ItarConfig, ItarError, StopDecision,
    StopReason, TopicBank, TopicLabel, TrainedIteration,
};
use itar_core::model::TopicRole;
use serde::{Deserialize, Serialize};

const SPEC_FILE: &str = "session.json";
const BANK_FILE: &str = "bank.jsonl";
const HISTORY_FILE: &str = "history.jsonl";
const LABELS_FILE: &str = "labels.json";

/// Number of (token, probability) pairs in a topic detail view.
pub const COLUMN_HEAD: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("corpus: {0}")]
    Corpus(#[from] itar_core::corpus::CorpusError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Itar(#[from] ItarError),
    #[error("session already exists in {0}")]
    Exists(PathBuf),
    #[error("no session in {0}")]
    Missing(PathBuf),
    #[error("{0}")]
    WrongPhase(String),
    #[error("topic {0} is not a free topic of the current iteration")]
    UnknownTopic(usize),
    #[error("topic {0} is fixed and cannot be labeled")]
    FixedTopic(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSpec {
    pub corpus: PathBuf,
    pub config: ItarConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct PendingLabels {
    iteration: usize,
    overrides: BTreeMap<usize, TopicLabel>,
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Idle,
    Training,
    AwaitingLabels,
    Stopped(StopReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PhaseView {
    Idle,
    Training { progress: f64 },
    AwaitingLabels,
    Stopped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCard {
    pub id: usize,
    pub top_words: Vec<String>,
    pub coherence: f64,
    pub auto_label: TopicLabel,
    pub human_label: Option<TopicLabel>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTopicCard {
    pub id: usize,
    pub bank_ref: String,
    pub top_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSummary {
    pub good: usize,
    pub bad: usize,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub good_percent: f64,
    pub bank_good: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: PhaseView,
    pub iteration: usize,
    pub topics: Vec<TopicCard>,
    pub fixed_topics: Vec<FixedTopicCard>,
    pub bank: BankSummary,
    pub history: Vec<HistoryPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicRoleView {
    Free,
    Fixed,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDetail {
    pub id: usize,
    pub role: TopicRoleView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank_ref: Option<String>,
    pub coherence: f64,
    pub auto_label: Option<TopicLabel>,
    pub human_label: Option<TopicLabel>,
    pub degenerate: bool,
    pub size: f64,
    pub column_head: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTicket {
    pub job_id: String,
    pub iteration: usize,
}

struct Inner {
    phase: Phase,
    iteration: usize,
    bank: TopicBank,
    history: Vec<IterationRecord>,
    trained: Option<TrainedIteration<f64>>,
    overrides: BTreeMap<usize, TopicLabel>,
    jobs: u64,
    last_error: Option<String>,
}

pub struct Session {
    dir: PathBuf,
    config: ItarConfig,
    corpus: Corpus,
    cooc: CooccurrenceStats,
    progress: AtomicUsize,
    inner: Mutex<Inner>,
}

fn fsync_dir(dir: &Path) -> Result<(), SessionError> {
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SessionError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    fsync_dir(path.parent().unwrap_or(Path::new(".")))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SessionError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| SessionError::Json { path: path.to_owned(), source })
}

fn read_history(path: &Path) -> Result<Vec<IterationRecord>, SessionError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| SessionError::Json { path: path.to_owned(), source })?);
    }
    Ok(out)
}

fn append_history(path: &Path, record: &IterationRecord) -> Result<(), SessionError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let line = serde_json::to_string(record).expect("records serialize") + "\n";
    f.write_all(line.as_bytes()).and_then(|_| f.sync_all()).map_err(io_err(path))
}

impl Session {
    /// Starts a new session in `dir` (created if missing).
    pub fn create(dir: impl Into<PathBuf>, spec: SessionSpec) -> Result<Arc<Self>, SessionError> {
        let dir = dir.into();
        if dir.join(SPEC_FILE).exists() {
            return Err(SessionError::Exists(dir));
        }
        spec.config.validate()?;
        let corpus = read_corpus(&spec.corpus)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let json = serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n";
        write_atomic(&dir.join(SPEC_FILE), json.as_bytes())?;
        Ok(Arc::new(Self::assemble(dir, spec.config, corpus, TopicBank::new(), Vec::new())))
    }

    /// Reopens a persisted session. A pending iteration is retrained before
    /// returning, so the state matches the one before shutdown.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Arc<Self>, SessionError> {
        let dir = dir.into();
        let spec_path = dir.join(SPEC_FILE);
        if !spec_path.exists() {
            return Err(SessionError::Missing(dir));
        }
        let spec: SessionSpec = read_json(&spec_path)?;
        let corpus = read_corpus(&spec.corpus)?;
        let history = read_history(&dir.join(HISTORY_FILE))?;
        let bank_path = dir.join(BANK_FILE);
        let mut bank =
            if bank_path.exists() { TopicBank::load(&bank_path, corpus.vocabulary())? } else { TopicBank::new() };
        // entries written before a crash that lost their history record
        if bank.entries().iter().any(|e| e.source_iteration >= history.len()) {
            let mut kept = TopicBank::new();
            for e in bank.entries().iter().filter(|e| e.source_iteration < history.len()) {
                kept.push(e.clone())?;
            }
            log::warn!("dropping {} bank entries without a history record", bank.len() - kept.len());
            kept.save(&bank_path, corpus.vocabulary())?;
            bank = kept;
        }
        let session = Self::assemble(dir, spec.config, corpus, bank, history);
        {
            let mut inner = session.lock();
            if let Some(StopDecision::Stop(reason)) = inner.history.last().map(|r| r.stop.clone()) {
                inner.phase = Phase::Stopped(reason);
            } else {
                let labels_path = session.dir.join(LABELS_FILE);
                if labels_path.exists() {
                    let pending: PendingLabels = read_json(&labels_path)?;
                    if pending.iteration == inner.iteration {
                        let trained = session.train(&inner.bank, inner.iteration)?;
                        inner.trained = Some(trained);
                        inner.overrides = pending.overrides;
                        inner.phase = Phase::AwaitingLabels;
                    }
                }
            }
        }
        Ok(Arc::new(session))
    }

    fn assemble(
        dir: PathBuf,
        config: ItarConfig,
        corpus: Corpus,
        bank: TopicBank,
        history: Vec<IterationRecord>,
    ) -> Self {
        let cooc = build_cooccurrence(&corpus);
        let iteration = history.len();
        Self {
            dir,
            config,
            corpus,
            cooc,
            progress: AtomicUsize::new(0),
            inner: Mutex::new(Inner {
                phase: Phase::Idle,
                iteration,
                bank,
                history,
                trained: None,
                overrides: BTreeMap::new(),
                jobs: 0,
                last_error: None,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &ItarConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn surfaces(&self, ids: &[u32]) -> Vec<String> {
        let vocab = self.corpus.vocabulary();
        ids.iter().map(|&w| vocab.surface(w).to_owned()).collect()
    }

    fn card(&self, trained: &TrainedIteration<f64>, overrides: &BTreeMap<usize, TopicLabel>, t: usize) -> TopicCard {
        let q = &trained.qualities[t];
        TopicCard {
            id: t,
            top_words: self.surfaces(&q.top_words),
            coherence: q.coherence(self.config.quality_criterion),
            auto_label: trained.auto_labels.iter().find(|&&(i, _)| i == t).map_or(TopicLabel::Neutral, |&(_, l)| l),
            human_label: overrides.get(&t).copied(),
            degenerate: q.degenerate,
        }
    }

    /// A consistent snapshot of the session.
    pub fn state(&self) -> SessionState {
        let inner = self.lock();
        let phase = match &inner.phase {
            Phase::Idle => PhaseView::Idle,
            Phase::AwaitingLabels => PhaseView::AwaitingLabels,
            Phase::Stopped(reason) => PhaseView::Stopped { reason: reason.to_string() },
            Phase::Training => {
                let done = self.progress.load(Ordering::Relaxed);
                PhaseView::Training { progress: (done as f64 / self.config.em_iterations.max(1) as f64).min(1.0) }
            }
        };
        let (topics, fixed_topics) = match &inner.trained {
            Some(trained) if inner.phase == Phase::AwaitingLabels => {
                let model = &trained.model;
                let free = model.free_topics().into_iter().map(|t| self.card(trained, &inner.overrides, t)).collect();
                let fixed = model
                    .roles
                    .iter()
                    .enumerate()
                    .filter_map(|(t, role)| match role {
                        TopicRole::Fixed { bank_ref } => Some(FixedTopicCard {
                            id: t,
                            bank_ref: bank_ref.clone(),
                            top_words: self.surfaces(&trained.qualities[t].top_words),
                        }),
                        _ => None,
                    })
                    .collect();
                (free, fixed)
            }
            _ => (Vec::new(), Vec::new()),
        };
        SessionState {
            phase,
            iteration: inner.iteration,
            topics,
            fixed_topics,
            bank: BankSummary {
                good: inner.bank.good_count(),
                bad: inner.bank.bad_count(),
                quota: self.config.good_quota(),
            },
            history: inner
                .history
                .iter()
                .map(|r| HistoryPoint {
                    iteration: r.iteration,
                    good_percent: r.metrics.good_percent,
                    bank_good: r.bank_good,
                })
                .collect(),
            last_error: inner.last_error.clone(),
        }
    }

    pub fn history(&self) -> Vec<IterationRecord> {
        self.lock().history.clone()
    }

    /// Full view of topic `id` of the iteration awaiting labels.
    pub fn topic(&self, id: usize) -> Result<TopicDetail, SessionError> {
        let inner = self.lock();
        let trained = match (&inner.phase, &inner.trained) {
            (Phase::AwaitingLabels, Some(t)) => t,
            _ => return Err(SessionError::UnknownTopic(id)),
        };
        let model = &trained.model;
        if id >= model.num_topics() {
            return Err(SessionError::UnknownTopic(id));
        }
        let (role, bank_ref) = match &model.roles[id] {
            TopicRole::Fixed { bank_ref } => (TopicRoleView::Fixed, Some(bank_ref.clone())),
            TopicRole::Background => (TopicRoleView::Background, None),
            TopicRole::Domain => (TopicRoleView::Free, None),
        };
        let q = &trained.qualities[id];
        let column = model.phi.column(id);
        let head = itar_core::metrics::top_words(column, COLUMN_HEAD)
            .into_iter()
            .map(|w| (self.corpus.vocabulary().surface(w).to_owned(), column[w as usize]))
            .collect();
        Ok(TopicDetail {
            id,
            role,
            bank_ref,
            coherence: q.coherence(self.config.quality_criterion),
            auto_label: trained.auto_labels.iter().find(|&&(i, _)| i == id).map(|&(_, l)| l),
            human_label: inner.overrides.get(&id).copied(),
            degenerate: q.degenerate,
            size: q.size,
            column_head: head,
        })
    }

    /// Records a human label for a free topic of the pending iteration.
    pub fn set_label(&self, id: usize, label: TopicLabel) -> Result<TopicCard, SessionError> {
        let mut inner = self.lock();
        if inner.phase != Phase::AwaitingLabels {
            return Err(SessionError::WrongPhase("labels are accepted only while awaiting labels".into()));
        }
        let trained = inner.trained.as_ref().expect("awaiting labels has a trained iteration");
        match trained.model.roles.get(id) {
            Some(TopicRole::Fixed { .. }) => return Err(SessionError::FixedTopic(id)),
            Some(TopicRole::Domain) => {}
            _ => return Err(SessionError::UnknownTopic(id)),
        }
        let mut overrides = inner.overrides.clone();
        overrides.insert(id, label);
        let pending = PendingLabels { iteration: inner.iteration, overrides };
        write_atomic(&self.dir.join(LABELS_FILE), &serde_json::to_vec(&pending).expect("labels serialize"))?;
        inner.overrides = pending.overrides;
        let trained = inner.trained.as_ref().expect("checked above");
        Ok(self.card(trained, &inner.overrides, id))
    }

    fn train(&self, bank: &TopicBank, iteration: usize) -> Result<TrainedIteration<f64>, SessionError> {
        self.progress.store(0, Ordering::Relaxed);
        let trained =
            train_iteration_observed(bank, &self.config, &self.corpus, &self.cooc, iteration, |sweep, _| {
                self.progress.store(sweep + 1, Ordering::Relaxed)
            })?;
        Ok(trained)
    }

    /// Claims the session for one background job. Fails unless idle or
    /// awaiting labels.
    fn claim(&self) -> Result<(JobTicket, Option<(TrainedIteration<f64>, BTreeMap<usize, TopicLabel>)>), SessionError> {
        let mut inner = self.lock();
        let pending = match &inner.phase {
            Phase::Idle => None,
            Phase::AwaitingLabels => {
                Some((inner.trained.take().expect("trained iteration"), std::mem::take(&mut inner.overrides)))
            }
            Phase::Training => return Err(SessionError::WrongPhase("an iteration is already training".into())),
            Phase::Stopped(reason) => return Err(SessionError::WrongPhase(format!("session stopped: {reason}"))),
        };
        inner.phase = Phase::Training;
        inner.jobs += 1;
        inner.last_error = None;
        self.progress.store(0, Ordering::Relaxed);
        let ticket = JobTicket { job_id: format!("job-{}", inner.jobs), iteration: inner.iteration };
        Ok((ticket, pending))
    }

    /// Applies pending labels (if any) and trains the next iteration on a
    /// blocking thread. Returns as soon as the job is started.
    pub fn iterate(self: &Arc<Self>) -> Result<JobTicket, SessionError> {
        let (ticket, pending) = self.claim()?;
        let session = Arc::clone(self);
        std::thread::spawn(move || session.run_job(pending));
        Ok(ticket)
    }

    /// Same as [`Session::iterate`] but runs the job on the calling thread.
    pub fn iterate_blocking(&self) -> Result<JobTicket, SessionError> {
        let (ticket, pending) = self.claim()?;
        self.run_job(pending);
        Ok(ticket)
    }

    fn run_job(&self, pending: Option<(TrainedIteration<f64>, BTreeMap<usize, TopicLabel>)>) {
        if let Some((trained, overrides)) = pending {
            match self.commit(&trained, &overrides) {
                Ok(true) => return,
                Ok(false) => {}
                Err(e) => {
                    log::error!("committing iteration {}: {e}", trained.iteration);
                    let mut inner = self.lock();
                    inner.trained = Some(trained);
                    inner.overrides = overrides;
                    inner.phase = Phase::AwaitingLabels;
                    inner.last_error = Some(e.to_string());
                    return;
                }
            }
        }
        let (bank, iteration) = {
            let inner = self.lock();
            (inner.bank.clone(), inner.iteration)
        };
        let result = self.train(&bank, iteration).and_then(|trained| {
            let pending = PendingLabels { iteration, overrides: BTreeMap::new() };
            write_atomic(&self.dir.join(LABELS_FILE), &serde_json::to_vec(&pending).expect("labels serialize"))?;
            Ok(trained)
        });
        let mut inner = self.lock();
        match result {
            Ok(trained) => {
                inner.trained = Some(trained);
                inner.phase = Phase::AwaitingLabels;
            }
            Err(e) => {
                log::error!("training iteration {iteration}: {e}");
                inner.phase = Phase::Idle;
                inner.last_error = Some(e.to_string());
            }
        }
    }

    /// Writes the labeled iteration to the bank and history. Returns whether
    /// the loop stopped.
    fn commit(
        &self,
        trained: &TrainedIteration<f64>,
        overrides: &BTreeMap<usize, TopicLabel>,
    ) -> Result<bool, SessionError> {
        let mut bank = self.lock().bank.clone();
        let vocab = self.corpus.vocabulary();
        let (record, added) = finish_iteration(trained, &mut bank, &self.config, &self.corpus, overrides)?;
        let bank_path = self.dir.join(BANK_FILE);
        TopicBank::append(&bank_path, &added, vocab)?;
        append_history(&self.dir.join(HISTORY_FILE), &record)?;
        let labels = self.dir.join(LABELS_FILE);
        if labels.exists() {
            fs::remove_file(&labels).map_err(io_err(&labels))?;
        }
        fsync_dir(&self.dir)?;
        // continue from the persisted form so a restarted session trains on
        // exactly the same columns
        let bank = TopicBank::load(&bank_path, vocab)?;
        let stop = record.stop.clone();
        let mut inner = self.lock();
        inner.bank = bank;
        inner.history.push(record);
        inner.iteration += 1;
        if let StopDecision::Stop(reason) = stop {
            inner.phase = Phase::Stopped(reason);
            return Ok(true);
        }
        Ok(false)
    }
}
