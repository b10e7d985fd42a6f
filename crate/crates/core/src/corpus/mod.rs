//! Text collections: vocabulary, bag-of-words documents with optional natural
//! word order, document-frequency filtering and co-occurrence statistics.

mod binary;
mod cooccurrence;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use binary::{read_corpus, write_corpus, CORPUS_FORMAT_VERSION, CORPUS_MAGIC};
pub use cooccurrence::{build_cooccurrence, CooccurrenceStats};

/// Dense index of a vocabulary entry.
pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: nonpositive count for token `{token}`")]
    NonpositiveCount { line: usize, token: String },
    #[error("line {line}: duplicate doc_id `{doc_id}`")]
    DuplicateDocument { line: usize, doc_id: String },
    #[error("invalid vocabulary filter: {0}")]
    InvalidFilter(String),
    #[error("empty vocabulary after filtering")]
    EmptyVocabulary,
    #[error("corpus contains no tokens")]
    NoTokens,
    #[error("not a corpus file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported corpus format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt corpus file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub surface: String,
    /// Number of documents containing the token.
    pub df: u32,
}

/// Token surfaces indexed `0..W` in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, TokenId>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.entries[id as usize].surface
    }

    pub fn df(&self, id: TokenId) -> u32 {
        self.entries[id as usize].df
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.surface.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    /// Distinct tokens with strictly positive counts, in first-appearance order.
    pub bow: Vec<(TokenId, u32)>,
    /// Natural word order, when the source provides it.
    pub sequence: Option<Vec<TokenId>>,
}

impl Document {
    /// Document length `n_d`.
    pub fn len(&self) -> u64 {
        self.bow.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bow.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    vocabulary: Vocabulary,
    documents: Vec<Document>,
    total_tokens: u64,
    has_sequences: bool,
}

impl Corpus {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn num_tokens(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    /// Total token count `n = Σ_d n_d`.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn has_sequences(&self) -> bool {
        self.has_sequences
    }

    /// Removes tokens with `df < df_min` or `df / |D| > df_max` and drops
    /// documents left without tokens.
    ///
    /// Dropping documents changes `|D|`, which can push further tokens over
    /// `df_max`, so the filter is applied until nothing changes. The result is
    /// therefore a fixed point and applying the same filter again is a no-op.
    pub fn filter_vocabulary(&self, df_min: u32, df_max: f64) -> Result<Corpus, CorpusError> {
        if df_min < 1 {
            return Err(CorpusError::InvalidFilter(format!("df_min must be >= 1, got {df_min}")));
        }
        if !(df_max > 0.0 && df_max <= 1.0) {
            return Err(CorpusError::InvalidFilter(format!("df_max must be in (0, 1], got {df_max}")));
        }
        let mut current = self.filter_once(df_min, df_max)?;
        loop {
            let next = current.filter_once(df_min, df_max)?;
            if next == current {
                return Ok(current);
            }
            current = next;
        }
    }

    fn filter_once(&self, df_min: u32, df_max: f64) -> Result<Corpus, CorpusError> {
        let num_docs = self.documents.len() as f64;
        let keep: Vec<bool> = self
            .vocabulary
            .entries
            .iter()
            .map(|e| e.df >= df_min && (e.df as f64) / num_docs <= df_max)
            .collect();
        if !keep.iter().any(|&k| k) {
            return Err(CorpusError::EmptyVocabulary);
        }

        let mode = if self.has_sequences { Mode::Sequence } else { Mode::Bow };
        let mut builder = CorpusBuilder::new(mode);
        let mut dropped = 0usize;
        for doc in &self.documents {
            let result = match &doc.sequence {
                Some(seq) if self.has_sequences => {
                    let seq: Vec<&str> = seq
                        .iter()
                        .filter(|&&w| keep[w as usize])
                        .map(|&w| self.vocabulary.surface(w))
                        .collect();
                    if seq.is_empty() {
                        dropped += 1;
                        continue;
                    }
                    builder.push_sequence(&doc.id, &seq)
                }
                _ => {
                    let bow: Vec<(&str, u32)> = doc
                        .bow
                        .iter()
                        .filter(|&&(w, _)| keep[w as usize])
                        .map(|&(w, c)| (self.vocabulary.surface(w), c))
                        .collect();
                    if bow.is_empty() {
                        dropped += 1;
                        continue;
                    }
                    builder.push_bow(&doc.id, &bow)
                }
            };
            result.map_err(|message| CorpusError::Malformed { line: 0, message })?;
        }
        if dropped > 0 {
            log::info!("vocabulary filter dropped {dropped} documents left without tokens");
        }
        Ok(builder.finish())
    }
}

/// Unigram distribution `(Σ_d n_dw) / n` over the vocabulary.
pub fn unigram_distribution<S: Scalar>(corpus: &Corpus) -> Result<Vec<S>, CorpusError> {
    if corpus.total_tokens == 0 {
        return Err(CorpusError::NoTokens);
    }
    let mut counts = vec![0u64; corpus.num_tokens()];
    for doc in &corpus.documents {
        for &(w, c) in &doc.bow {
            counts[w as usize] += c as u64;
        }
    }
    let n = S::of_count(corpus.total_tokens);
    Ok(counts.into_iter().map(|c| S::of_count(c) / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Bow,
    Sequence,
}

/// Interns surfaces and collects documents; document frequencies are computed
/// by [`CorpusBuilder::finish`].
#[derive(Debug)]
pub(crate) struct CorpusBuilder {
    mode: Mode,
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
    documents: Vec<Document>,
    doc_ids: HashSet<String>,
}

impl CorpusBuilder {
    fn new(mode: Mode) -> Self {
        Self {
            mode,
            surfaces: Vec::new(),
            index: HashMap::new(),
            documents: Vec::new(),
            doc_ids: HashSet::new(),
        }
    }

    pub(crate) fn bow() -> Self {
        Self::new(Mode::Bow)
    }

    pub(crate) fn sequences() -> Self {
        Self::new(Mode::Sequence)
    }

    fn intern(&mut self, surface: &str) -> TokenId {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.surfaces.push(surface.to_owned());
        self.index.insert(surface.to_owned(), id);
        id
    }

    fn claim_id(&mut self, doc_id: &str) -> Result<(), String> {
        if !self.doc_ids.insert(doc_id.to_owned()) {
            return Err(format!("duplicate doc_id `{doc_id}`"));
        }
        Ok(())
    }

    /// Adds a bag-of-words document. Counts must be positive and surfaces unique.
    pub(crate) fn push_bow(&mut self, doc_id: &str, bow: &[(&str, u32)]) -> Result<(), String> {
        if bow.is_empty() {
            return Err(format!("document `{doc_id}` has no tokens"));
        }
        let mut seen = HashSet::with_capacity(bow.len());
        for &(surface, count) in bow {
            if count == 0 {
                return Err(format!("nonpositive count for token `{surface}`"));
            }
            if !seen.insert(surface) {
                return Err(format!("token `{surface}` repeated within document `{doc_id}`"));
            }
        }
        self.claim_id(doc_id)?;
        let bow = bow.iter().map(|&(s, c)| (self.intern(s), c)).collect();
        self.documents.push(Document { id: doc_id.to_owned(), bow, sequence: None });
        Ok(())
    }

    /// Adds a document in natural word order; its bag of words is derived from the sequence.
    pub(crate) fn push_sequence(&mut self, doc_id: &str, sequence: &[&str]) -> Result<(), String> {
        if sequence.is_empty() {
            return Err(format!("document `{doc_id}` has an empty token list"));
        }
        self.claim_id(doc_id)?;
        let sequence: Vec<TokenId> = sequence.iter().map(|s| self.intern(s)).collect();
        let mut position: HashMap<TokenId, usize> = HashMap::new();
        let mut bow: Vec<(TokenId, u32)> = Vec::new();
        for &w in &sequence {
            match position.get(&w) {
                Some(&i) => bow[i].1 += 1,
                None => {
                    position.insert(w, bow.len());
                    bow.push((w, 1));
                }
            }
        }
        self.documents.push(Document { id: doc_id.to_owned(), bow, sequence: Some(sequence) });
        Ok(())
    }

    pub(crate) fn finish(self) -> Corpus {
        let mut df = vec![0u32; self.surfaces.len()];
        let mut total_tokens = 0u64;
        for doc in &self.documents {
            for &(w, c) in &doc.bow {
                df[w as usize] += 1;
                total_tokens += c as u64;
            }
        }
        let entries = self
            .surfaces
            .into_iter()
            .zip(df)
            .map(|(surface, df)| VocabEntry { surface, df })
            .collect();
        let has_sequences =
            self.mode == Mode::Sequence && self.documents.iter().all(|d| d.sequence.is_some());
        Corpus {
            vocabulary: Vocabulary { entries, index: self.index },
            documents: self.documents,
            total_tokens,
            has_sequences,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io { path: path.to_owned(), source })
}

/// Reads a bag-of-words file: one document per line, `doc_id token:count ...`.
pub fn parse_bow(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    read_bow(open(path)?).map_err(|e| with_path(e, path))
}

/// Reads a natural-word-order file: one document per line, `doc_id<TAB>lemma lemma ...`.
pub fn parse_sequences(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    read_sequences(open(path)?).map_err(|e| with_path(e, path))
}

fn with_path(err: CorpusError, path: &Path) -> CorpusError {
    match err {
        CorpusError::Io { source, .. } => CorpusError::Io { path: path.to_owned(), source },
        other => other,
    }
}

fn io_err(source: io::Error) -> CorpusError {
    CorpusError::Io { path: PathBuf::new(), source }
}

pub fn read_bow<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut builder = CorpusBuilder::bow();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        let mut fields = line.split_whitespace();
        let Some(doc_id) = fields.next() else { continue };
        if doc_id.contains(':') {
            return Err(malformed(line_no, format!("missing doc_id before `{doc_id}`")));
        }
        let mut bow = Vec::new();
        for field in fields {
            let (surface, count) = field
                .split_once(':')
                .ok_or_else(|| malformed(line_no, format!("expected token:count, got `{field}`")))?;
            if surface.is_empty() || count.contains(':') {
                return Err(malformed(line_no, format!("expected token:count, got `{field}`")));
            }
            bow.push((surface, parse_count(line_no, surface, count)?));
        }
        if bow.is_empty() {
            return Err(malformed(line_no, format!("document `{doc_id}` has no tokens")));
        }
        if builder.doc_ids.contains(doc_id) {
            return Err(CorpusError::DuplicateDocument { line: line_no, doc_id: doc_id.to_owned() });
        }
        builder.push_bow(doc_id, &bow).map_err(|m| malformed(line_no, m))?;
    }
    Ok(builder.finish())
}

fn parse_count(line: usize, token: &str, raw: &str) -> Result<u32, CorpusError> {
    if let Ok(value) = raw.parse::<i64>() {
        if value <= 0 {
            return Err(CorpusError::NonpositiveCount { line, token: token.to_owned() });
        }
        return u32::try_from(value)
            .map_err(|_| malformed(line, format!("count {value} for `{token}` is too large")));
    }
    match raw.parse::<f64>() {
        Ok(value) if value <= 0.0 => {
            Err(CorpusError::NonpositiveCount { line, token: token.to_owned() })
        }
        Ok(_) => Err(malformed(line, format!("non-integer count `{raw}` for `{token}`"))),
        Err(_) => Err(malformed(line, format!("invalid count `{raw}` for `{token}`"))),
    }
}

pub fn read_sequences<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut builder = CorpusBuilder::sequences();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let (doc_id, text) = line
            .split_once('\t')
            .ok_or_else(|| malformed(line_no, "missing tab separator".to_owned()))?;
        let doc_id = doc_id.trim();
        if doc_id.is_empty() {
            return Err(malformed(line_no, "empty doc_id".to_owned()));
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(malformed(line_no, "empty token list".to_owned()));
        }
        if builder.doc_ids.contains(doc_id) {
            return Err(CorpusError::DuplicateDocument { line: line_no, doc_id: doc_id.to_owned() });
        }
        builder.push_sequence(doc_id, &tokens).map_err(|m| malformed(line_no, m))?;
    }
    Ok(builder.finish())
}

fn malformed(line: usize, message: String) -> CorpusError {
    CorpusError::Malformed { line, message }
}
