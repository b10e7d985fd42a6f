use std::collections::HashMap;

use rayon::prelude::*;

use super::{Corpus, TokenId};

/// Document-window co-occurrence counts.
///
/// A pair is counted once per document containing both tokens, regardless of
/// how often either occurs in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceStats {
    doc_count: u32,
    token_doc_freq: Vec<u32>,
    pair_doc_freq: HashMap<(TokenId, TokenId), u32>,
}

impl CooccurrenceStats {
    pub fn doc_count(&self) -> u32 {
        self.doc_count
    }

    pub fn num_tokens(&self) -> usize {
        self.token_doc_freq.len()
    }

    pub fn token_doc_freq(&self, w: TokenId) -> u32 {
        self.token_doc_freq[w as usize]
    }

    /// Number of documents containing both tokens. Symmetric; `(w, w)` is the
    /// token's own document frequency.
    pub fn pair_doc_freq(&self, a: TokenId, b: TokenId) -> u32 {
        if a == b {
            return self.token_doc_freq(a);
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair_doc_freq.get(&key).copied().unwrap_or(0)
    }

    /// Stored pairs `(i, j)` with `i < j` and their counts.
    pub fn pairs(&self) -> impl Iterator<Item = ((TokenId, TokenId), u32)> + '_ {
        self.pair_doc_freq.iter().map(|(&k, &v)| (k, v))
    }
}

/// Single pass over the corpus, parallel over documents. Per-pair counts are
/// integer sums, so the merge order does not affect the result.
pub fn build_cooccurrence(corpus: &Corpus) -> CooccurrenceStats {
    let num_tokens = corpus.num_tokens();
    let (token_doc_freq, pair_doc_freq) = corpus
        .documents()
        .par_iter()
        .fold(
            || (vec![0u32; num_tokens], HashMap::new()),
            |(mut freq, mut pairs), doc| {
                let mut ids: Vec<TokenId> = doc.bow.iter().map(|&(w, _)| w).collect();
                ids.sort_unstable();
                for (i, &a) in ids.iter().enumerate() {
                    freq[a as usize] += 1;
                    for &b in &ids[i + 1..] {
                        *pairs.entry((a, b)).or_insert(0u32) += 1;
                    }
                }
                (freq, pairs)
            },
        )
        .reduce(
            || (vec![0u32; num_tokens], HashMap::new()),
            |(mut freq, mut pairs), (other_freq, other_pairs)| {
                for (f, o) in freq.iter_mut().zip(other_freq) {
                    *f += o;
                }
                for (key, count) in other_pairs {
                    *pairs.entry(key).or_insert(0) += count;
                }
                (freq, pairs)
            },
        );
    CooccurrenceStats {
        doc_count: corpus.num_documents() as u32,
        token_doc_freq,
        pair_doc_freq,
    }
}
