//! Persistent store of previously found good and bad topic columns.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::Scalar;

/// Probabilities below this are dropped when a column is written.
pub const BANK_PROB_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("duplicate bank id {0}")]
    DuplicateId(String),
    #[error("bank entry {0}: column length {1} does not match vocabulary size {2}")]
    ColumnLength(String, usize, usize),
    #[error("bank entry {0}: column is not a probability distribution")]
    NotStochastic(String),
    #[error("bank entry {0}: no token of the column is in the vocabulary")]
    EmptyProjection(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bank line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankLabel {
    Good,
    Bad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub id: String,
    pub label: BankLabel,
    pub source_iteration: usize,
    pub coherence: f64,
    /// Stochastic column aligned with the current vocabulary.
    pub column: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    id: String,
    label: BankLabel,
    source_iteration: usize,
    coherence: f64,
    column: BTreeMap<String, f64>,
}

/// Append-only topic bank. Entries are never mutated once stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicBank {
    entries: Vec<BankEntry>,
}

impl TopicBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_label(&self, label: BankLabel) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter().filter(move |e| e.label == label)
    }

    pub fn good_count(&self) -> usize {
        self.with_label(BankLabel::Good).count()
    }

    pub fn bad_count(&self) -> usize {
        self.with_label(BankLabel::Bad).count()
    }

    pub fn get(&self, id: &str) -> Option<&BankEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Stable id of the `topic`-th banked topic of `iteration`.
    pub fn make_id(label: BankLabel, iteration: usize, topic: usize) -> String {
        let prefix = match label {
            BankLabel::Good => "g",
            BankLabel::Bad => "b",
        };
        format!("{prefix}{iteration:03}_{topic:03}")
    }

    pub fn push(&mut self, entry: BankEntry) -> Result<(), BankError> {
        if self.get(&entry.id).is_some() {
            return Err(BankError::DuplicateId(entry.id));
        }
        if let Some(n) = self.entries.first().map(|e| e.column.len()) {
            if entry.column.len() != n {
                return Err(BankError::ColumnLength(entry.id, entry.column.len(), n));
            }
        }
        let sum: f64 = entry.column.iter().sum();
        if entry.column.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-6 {
            return Err(BankError::NotStochastic(entry.id));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// `(id, column)` of each good entry in bank order.
    pub fn good_columns<S: Scalar>(&self) -> Vec<(String, Vec<S>)> {
        self.with_label(BankLabel::Good)
            .map(|e| (e.id.clone(), e.column.iter().map(|&v| S::of(v)).collect()))
            .collect()
    }

    pub fn columns<S: Scalar>(&self, label: BankLabel) -> Vec<Vec<S>> {
        self.with_label(label).map(|e| e.column.iter().map(|&v| S::of(v)).collect()).collect()
    }

    /// One JSON object per entry, keyed by token surface.
    pub fn entry_line(entry: &BankEntry, vocabulary: &Vocabulary) -> String {
        let column = entry
            .column
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= BANK_PROB_EPSILON)
            .map(|(w, &p)| (vocabulary.surface(w as u32).to_owned(), p))
            .collect();
        let line = EntryLine {
            id: entry.id.clone(),
            label: entry.label,
            source_iteration: entry.source_iteration,
            coherence: entry.coherence,
            column,
        };
        serde_json::to_string(&line).expect("bank entries serialize")
    }

    pub fn to_jsonl(&self, vocabulary: &Vocabulary) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&Self::entry_line(e, vocabulary));
            out.push('\n');
        }
        out
    }

    /// Parses a bank file and re-projects every column onto `vocabulary`.
    /// Surfaces missing from the vocabulary are dropped and the remainder is
    /// renormalized.
    pub fn read_jsonl<R: BufRead>(reader: R, vocabulary: &Vocabulary) -> Result<Self, BankError> {
        let mut bank = TopicBank::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| BankError::Io { path: PathBuf::from("<reader>"), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: EntryLine =
                serde_json::from_str(&line).map_err(|source| BankError::Json { line: i + 1, source })?;
            if !seen.insert(parsed.id.clone()) {
                return Err(BankError::DuplicateId(parsed.id));
            }
            let mut column = vec![0.0; vocabulary.len()];
            let mut dropped = 0usize;
            for (surface, p) in &parsed.column {
                match vocabulary.id(surface) {
                    Some(w) => column[w as usize] = *p,
                    None => dropped += 1,
                }
            }
            if dropped > 0 {
                log::warn!("bank entry {}: {dropped} tokens not in vocabulary", parsed.id);
            }
            let sum: f64 = column.iter().sum();
            if !(sum > 0.0) {
                return Err(BankError::EmptyProjection(parsed.id));
            }
            column.iter_mut().for_each(|v| *v /= sum);
            bank.push(BankEntry {
                id: parsed.id,
                label: parsed.label,
                source_iteration: parsed.source_iteration,
                coherence: parsed.coherence,
                column,
            })?;
        }
        Ok(bank)
    }

    pub fn load(path: impl AsRef<Path>, vocabulary: &Vocabulary) -> Result<Self, BankError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| BankError::Io { path: path.to_owned(), source })?;
        Self::read_jsonl(BufReader::new(file), vocabulary)
    }

    /// Writes the whole bank, replacing `path`, and syncs it to disk.
    pub fn save(&self, path: impl AsRef<Path>, vocabulary: &Vocabulary) -> Result<(), BankError> {
        let path = path.as_ref();
        let io = |source| BankError::Io { path: path.to_owned(), source };
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
            w.write_all(self.to_jsonl(vocabulary).as_bytes()).map_err(io)?;
            w.into_inner().map_err(|e| io(e.into_error()))?.sync_all().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)
    }

    /// Appends `entries` to an existing bank file and syncs it.
    pub fn append(path: impl AsRef<Path>, entries: &[BankEntry], vocabulary: &Vocabulary) -> Result<(), BankError> {
        let path = path.as_ref();
        let io = |source| BankError::Io { path: path.to_owned(), source };
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&Self::entry_line(e, vocabulary));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_bow;

    fn vocab() -> Vocabulary {
        read_bow("d1 a:1 b:1 c:1 d:1\n".as_bytes()).unwrap().vocabulary().clone()
    }

    fn entry(id: &str, label: BankLabel, column: Vec<f64>) -> BankEntry {
        BankEntry { id: id.into(), label, source_iteration: 0, coherence: 1.5, column }
    }

    #[test]
    fn rejects_duplicates_and_non_stochastic() {
        let mut bank = TopicBank::new();
        bank.push(entry("g0", BankLabel::Good, vec![0.5, 0.5, 0.0, 0.0])).unwrap();
        assert!(matches!(
            bank.push(entry("g0", BankLabel::Bad, vec![0.25; 4])),
            Err(BankError::DuplicateId(_))
        ));
        assert!(matches!(
            bank.push(entry("g1", BankLabel::Good, vec![0.5, 0.6, 0.0, 0.0])),
            Err(BankError::NotStochastic(_))
        ));
        assert!(matches!(bank.push(entry("g2", BankLabel::Good, vec![1.0])), Err(BankError::ColumnLength(..))));
    }

    #[test]
    fn jsonl_round_trip() {
        let v = vocab();
        let mut bank = TopicBank::new();
        bank.push(entry("g000_001", BankLabel::Good, vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        bank.push(entry("b000_002", BankLabel::Bad, vec![0.0, 0.0, 1.0, 0.0])).unwrap();
        let text = bank.to_jsonl(&v);
        assert!(text.lines().nth(1).unwrap().contains(r#""column":{"c":1.0}"#), "{text}");
        let back = TopicBank::read_jsonl(text.as_bytes(), &v).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.good_count(), 1);
        assert_eq!(back.bad_count(), 1);
    }

    #[test]
    fn tiny_probabilities_are_omitted_then_renormalized() {
        let v = vocab();
        let mut bank = TopicBank::new();
        bank.push(entry("g", BankLabel::Good, vec![0.5 - 5e-10, 0.5 - 5e-10, 1e-9, 0.0])).unwrap();
        let text = bank.to_jsonl(&v);
        assert!(text.contains("\"c\""));
        let mut bank = TopicBank::new();
        bank.push(entry("g", BankLabel::Good, vec![0.5 - 1e-10, 0.5 - 1e-10, 2e-10, 0.0])).unwrap();
        let back = TopicBank::read_jsonl(bank.to_jsonl(&v).as_bytes(), &v).unwrap();
        assert_eq!(back.entries()[0].column[2], 0.0);
        assert!((back.entries()[0].column.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reprojection_onto_smaller_vocabulary() {
        let line = r#"{"id":"g","label":"good","source_iteration":2,"coherence":0.5,"column":{"a":0.5,"zz":0.25,"c":0.25}}"#;
        let bank = TopicBank::read_jsonl(line.as_bytes(), &vocab()).unwrap();
        let col = &bank.entries()[0].column;
        assert!((col[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((col[2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(bank.entries()[0].source_iteration, 2);

        let none = r#"{"id":"g","label":"good","source_iteration":0,"coherence":0.5,"column":{"zz":1.0}}"#;
        assert!(matches!(TopicBank::read_jsonl(none.as_bytes(), &vocab()), Err(BankError::EmptyProjection(_))));
    }

    #[test]
    fn save_append_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let v = vocab();
        let mut bank = TopicBank::new();
        bank.push(entry("g1", BankLabel::Good, vec![0.25; 4])).unwrap();
        bank.save(&path, &v).unwrap();
        let extra = entry("b1", BankLabel::Bad, vec![0.0, 1.0, 0.0, 0.0]);
        TopicBank::append(&path, std::slice::from_ref(&extra), &v).unwrap();
        bank.push(extra).unwrap();
        assert_eq!(TopicBank::load(&path, &v).unwrap(), bank);
    }
}
