//! Versioned binary corpus container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic      8 bytes  "ITARCORP"
//! version    u32      CORPUS_FORMAT_VERSION
//! flags      u32      bit 0: documents carry natural word order
//! W          u32      vocabulary size, then W × (len u32, UTF-8 bytes)
//! D          u32      document count, then per document:
//!                       id: len u32, UTF-8 bytes
//!                       nnz u32, nnz × (token_id u32, count u32)
//!                       if bit 0: seq_len u32, seq_len × token_id u32
//! ```
//!
//! Document frequencies are not stored; they are recomputed on load.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Corpus, CorpusError, Document, TokenId, VocabEntry, Vocabulary};

pub const CORPUS_MAGIC: &[u8; 8] = b"ITARCORP";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

const FLAG_SEQUENCES: u32 = 1;

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io { path: path.to_owned(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    encode(corpus, &mut out).map_err(io)?;
    out.flush().map_err(io)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })?;
    decode(&mut BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } if source.kind() == io::ErrorKind::UnexpectedEof => {
            CorpusError::Corrupt("unexpected end of file".to_owned())
        }
        CorpusError::Io { source, .. } => CorpusError::Io { path: path.to_owned(), source },
        other => other,
    })
}

fn write_str<W: Write>(out: &mut W, s: &str) -> io::Result<()> {
    out.write_u32::<LittleEndian>(s.len() as u32)?;
    out.write_all(s.as_bytes())
}

pub(crate) fn encode<W: Write>(corpus: &Corpus, out: &mut W) -> io::Result<()> {
    out.write_all(CORPUS_MAGIC)?;
    out.write_u32::<LittleEndian>(CORPUS_FORMAT_VERSION)?;
    out.write_u32::<LittleEndian>(if corpus.has_sequences { FLAG_SEQUENCES } else { 0 })?;
    out.write_u32::<LittleEndian>(corpus.num_tokens() as u32)?;
    for surface in corpus.vocabulary.surfaces() {
        write_str(out, surface)?;
    }
    out.write_u32::<LittleEndian>(corpus.num_documents() as u32)?;
    for doc in &corpus.documents {
        write_str(out, &doc.id)?;
        out.write_u32::<LittleEndian>(doc.bow.len() as u32)?;
        for &(w, c) in &doc.bow {
            out.write_u32::<LittleEndian>(w)?;
            out.write_u32::<LittleEndian>(c)?;
        }
        if corpus.has_sequences {
            let seq = doc.sequence.as_deref().unwrap_or_default();
            out.write_u32::<LittleEndian>(seq.len() as u32)?;
            for &w in seq {
                out.write_u32::<LittleEndian>(w)?;
            }
        }
    }
    Ok(())
}

fn io_err(source: io::Error) -> CorpusError {
    CorpusError::Io { path: Default::default(), source }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, CorpusError> {
    input.read_u32::<LittleEndian>().map_err(io_err)
}

fn read_str<R: Read>(input: &mut R) -> Result<String, CorpusError> {
    let len = read_u32(input)? as usize;
    let mut buf = Vec::new();
    input.take(len as u64).read_to_end(&mut buf).map_err(io_err)?;
    if buf.len() != len {
        return Err(CorpusError::Corrupt("truncated string".to_owned()));
    }
    String::from_utf8(buf).map_err(|_| CorpusError::Corrupt("invalid UTF-8".to_owned()))
}

pub(crate) fn decode<R: Read>(input: &mut R) -> Result<Corpus, CorpusError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| CorpusError::BadMagic)?;
    if &magic != CORPUS_MAGIC {
        return Err(CorpusError::BadMagic);
    }
    let version = read_u32(input)?;
    if version != CORPUS_FORMAT_VERSION {
        return Err(CorpusError::UnsupportedVersion(version));
    }
    let has_sequences = read_u32(input)? & FLAG_SEQUENCES != 0;

    let num_tokens = read_u32(input)? as usize;
    let mut surfaces = Vec::with_capacity(num_tokens.min(1 << 20));
    for _ in 0..num_tokens {
        surfaces.push(read_str(input)?);
    }

    let num_docs = read_u32(input)? as usize;
    let mut documents = Vec::with_capacity(num_docs.min(1 << 20));
    for _ in 0..num_docs {
        let id = read_str(input)?;
        let nnz = read_u32(input)? as usize;
        let mut bow = Vec::with_capacity(nnz.min(1 << 20));
        for _ in 0..nnz {
            bow.push((read_u32(input)?, read_u32(input)?));
        }
        let sequence = if has_sequences {
            let len = read_u32(input)? as usize;
            let mut seq = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                seq.push(read_u32(input)?);
            }
            Some(seq)
        } else {
            None
        };
        documents.push(Document { id, bow, sequence });
    }
    from_parts(surfaces, documents, has_sequences).map_err(CorpusError::Corrupt)
}

/// Assembles a corpus from decoded parts, checking every document invariant.
fn from_parts(
    surfaces: Vec<String>,
    documents: Vec<Document>,
    has_sequences: bool,
) -> Result<Corpus, String> {
    let num_tokens = surfaces.len();
    let mut index = HashMap::with_capacity(num_tokens);
    for (i, s) in surfaces.iter().enumerate() {
        if index.insert(s.clone(), i as TokenId).is_some() {
            return Err(format!("duplicate surface `{s}`"));
        }
    }
    let mut df = vec![0u32; num_tokens];
    let mut total_tokens = 0u64;
    let mut ids = HashSet::new();
    for doc in &documents {
        if !ids.insert(doc.id.as_str()) {
            return Err(format!("duplicate doc_id `{}`", doc.id));
        }
        if doc.bow.is_empty() {
            return Err(format!("document `{}` has no tokens", doc.id));
        }
        let mut counts: HashMap<TokenId, u32> = HashMap::with_capacity(doc.bow.len());
        for &(w, c) in &doc.bow {
            if w as usize >= num_tokens || c == 0 || counts.insert(w, c).is_some() {
                return Err(format!("invalid bag of words in document `{}`", doc.id));
            }
            df[w as usize] += 1;
            total_tokens += c as u64;
        }
        if let Some(seq) = &doc.sequence {
            let mut seq_counts: HashMap<TokenId, u32> = HashMap::with_capacity(counts.len());
            for &w in seq {
                *seq_counts.entry(w).or_insert(0) += 1;
            }
            if seq_counts != counts {
                return Err(format!("sequence of `{}` disagrees with its bag of words", doc.id));
            }
        }
    }
    if let Some(w) = df.iter().position(|&f| f == 0) {
        return Err(format!("token `{}` occurs in no document", surfaces[w]));
    }
    let entries = surfaces.into_iter().zip(df).map(|(surface, df)| VocabEntry { surface, df }).collect();
    Ok(Corpus {
        vocabulary: Vocabulary { entries, index },
        documents,
        total_tokens,
        has_sequences,
    })
}
