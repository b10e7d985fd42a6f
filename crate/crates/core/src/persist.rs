//! Text serialization of Φ and Θ.
//!
//! Φ is a TSV with a header of topic names, one row per token (surface in
//! the first column) and probabilities printed with 9 significant digits.
//! The sparse variant is JSON lines of `{token, topic, p}` for `p ≥ 1e-9`.

use std::io::{self, BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Vocabulary};
use crate::Scalar;

pub const SPARSE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Nine significant digits; zero prints as `0`.
fn format_prob(v: f64) -> String {
    if v == 0.0 {
        "0".to_owned()
    } else {
        format!("{v:.8e}")
    }
}

pub fn write_phi_tsv<S: Scalar, W: Write>(
    mut out: W,
    phi: &Array2<S>,
    vocabulary: &Vocabulary,
    topic_names: &[String],
) -> io::Result<()> {
    write!(out, "token")?;
    for name in topic_names {
        write!(out, "\t{name}")?;
    }
    writeln!(out)?;
    for (w, row) in phi.rows().into_iter().enumerate() {
        write!(out, "{}", vocabulary.surface(w as u32))?;
        for v in row {
            write!(out, "\t{}", format_prob(v.as_f64()))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a Φ TSV, returning topic names, token surfaces and the matrix.
pub fn read_phi_tsv<R: BufRead>(reader: R) -> Result<(Vec<String>, Vec<String>, Array2<f64>), PersistError> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or(PersistError::Malformed { line: 1, message: "empty file".into() })?;
    let names: Vec<String> = header.split('\t').skip(1).map(str::to_owned).collect();
    let mut tokens = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        tokens.push(fields.next().unwrap_or_default().to_owned());
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| PersistError::Malformed { line: i + 2, message: e.to_string() })?;
        if row.len() != names.len() {
            return Err(PersistError::Malformed {
                line: i + 2,
                message: format!("{} values for {} topics", row.len(), names.len()),
            });
        }
        values.extend(row);
    }
    let phi = Array2::from_shape_vec((tokens.len(), names.len()), values).expect("row lengths checked");
    Ok((names, tokens, phi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCell {
    pub token: String,
    pub topic: String,
    pub p: f64,
}

pub fn write_phi_sparse<S: Scalar, W: Write>(
    mut out: W,
    phi: &Array2<S>,
    vocabulary: &Vocabulary,
    topic_names: &[String],
) -> io::Result<()> {
    for (t, name) in topic_names.iter().enumerate() {
        for (w, v) in phi.column(t).iter().enumerate() {
            let p = v.as_f64();
            if p >= SPARSE_EPSILON {
                let cell = SparseCell { token: vocabulary.surface(w as u32).to_owned(), topic: name.clone(), p };
                serde_json::to_writer(&mut out, &cell)?;
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

/// Θ as TSV: one row per document, one column per topic.
pub fn write_theta_tsv<S: Scalar, W: Write>(
    mut out: W,
    theta: &Array2<S>,
    corpus: &Corpus,
    topic_names: &[String],
) -> io::Result<()> {
    write!(out, "document")?;
    for name in topic_names {
        write!(out, "\t{name}")?;
    }
    writeln!(out)?;
    for (d, doc) in corpus.documents().iter().enumerate() {
        write!(out, "{}", doc.id)?;
        for v in theta.column(d) {
            write!(out, "\t{}", format_prob(v.as_f64()))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
