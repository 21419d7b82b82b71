//! BM25 inverted index over corpus chunks.
//!
//! Robertson–Spärck Jones variant with `+1` inside the idf log so idf stays
//! non-negative; defaults `k1 = 1.2`, `b = 0.75`. The index is immutable
//! after build and safe for concurrent reads.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textkit;

/// One retrievable unit of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusChunk {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    /// Unknown fields from corpus.jsonl, preserved on round-trip.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CorpusChunk {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        CorpusChunk {
            id: id.into(),
            title: title.into(),
            text: text.into(),
            extra: serde_json::Map::new(),
        }
    }
}

/// BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) {
            return Err(Error::Config(format!("bm25 k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("bm25 b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

const INDEX_FORMAT: &str = "c2l-bm25-index";
const INDEX_VERSION: u32 = 1;

/// Inverted index. Postings map lowercased terms to `(slot, term frequency)`
/// pairs sorted by slot; `doc_lengths[slot]` is the chunk's token count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    format: String,
    version: u32,
    params: Bm25Params,
    chunks: Vec<CorpusChunk>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    #[serde(skip)]
    id_to_slot: BTreeMap<String, usize>,
}

fn terms_of(text: &str) -> Vec<String> {
    textkit::token_texts(text)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

impl Bm25Index {
    /// Build an index over `chunks`. Rejects an empty corpus, duplicate
    /// ids (naming the offender), and empty chunk text.
    pub fn build(chunks: Vec<CorpusChunk>, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if chunks.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        let mut id_to_slot = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(chunks.len());
        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();

        for (slot, chunk) in chunks.iter().enumerate() {
            if chunk.text.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "chunk {} has empty text",
                    chunk.id
                )));
            }
            if id_to_slot.insert(chunk.id.clone(), slot).is_some() {
                return Err(Error::DuplicateId(chunk.id.clone()));
            }
            let terms = terms_of(&chunk.text);
            doc_lengths.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for term in terms {
                *tf.entry(term).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((slot, count));
            }
        }

        let avg_doc_len =
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64;

        Ok(Bm25Index {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            params,
            chunks,
            doc_lengths,
            avg_doc_len,
            postings,
            id_to_slot,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn chunks(&self) -> &[CorpusChunk] {
        &self.chunks
    }

    pub fn chunk_by_id(&self, id: &str) -> Option<&CorpusChunk> {
        self.id_to_slot.get(id).map(|&slot| &self.chunks[slot])
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.id_to_slot.get(id).map(|&slot| self.doc_lengths[slot])
    }

    /// Term frequency of `term` (already lowercased) in the chunk at `slot`.
    fn term_frequency(&self, term: &str, slot: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&slot, |&(s, _)| s)
                    .ok()
                    .map(|i| list[i].1)
            })
            .unwrap_or(0)
    }

    fn idf(&self, term: &str) -> f64 {
        let n_docs = self.chunks.len() as f64;
        let n_t = self.postings.get(term).map(|l| l.len()).unwrap_or(0) as f64;
        ((n_docs - n_t + 0.5) / (n_t + 0.5) + 1.0).ln()
    }

    fn score_slot(&self, query_terms: &[String], slot: usize) -> f64 {
        let k1 = self.params.k1;
        let b = self.params.b;
        let len = self.doc_lengths[slot] as f64;
        let mut score = 0.0;
        for term in query_terms {
            let tf = self.term_frequency(term, slot) as f64;
            if tf == 0.0 {
                continue;
            }
            let norm = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / self.avg_doc_len));
            score += self.idf(term) * norm;
        }
        score
    }

    /// BM25 score of `query` against the chunk `chunk_id`. Query terms sum
    /// with multiplicity; terms absent from the chunk contribute 0.
    pub fn bm25_score(&self, query: &str, chunk_id: &str) -> Result<f64> {
        let slot = *self
            .id_to_slot
            .get(chunk_id)
            .ok_or_else(|| Error::UnknownId(chunk_id.to_string()))?;
        Ok(self.score_slot(&terms_of(query), slot))
    }

    /// Top-`k` chunks by descending score, ties broken by ascending chunk
    /// id. Returns `min(k, N)` entries; zero-score chunks participate.
    pub fn retrieve_top_k(&self, query: &str, k: usize) -> Vec<(&CorpusChunk, f64)> {
        let terms = terms_of(query);
        let mut scored: Vec<(usize, f64)> = (0..self.chunks.len())
            .map(|slot| (slot, self.score_slot(&terms, slot)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.chunks[a.0].id.cmp(&self.chunks[b.0].id))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(slot, score)| (&self.chunks[slot], score))
            .collect()
    }

    /// Persist as a self-describing JSON file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut index: Bm25Index = serde_json::from_str(&raw)?;
        if index.format != INDEX_FORMAT || index.version != INDEX_VERSION {
            return Err(Error::Config(format!(
                "unsupported index file {} ({} v{})",
                path.display(),
                index.format,
                index.version
            )));
        }
        index.id_to_slot = index
            .chunks
            .iter()
            .enumerate()
            .map(|(slot, c)| (c.id.clone(), slot))
            .collect();
        Ok(index)
    }
}

/// Split oversized corpus entries into chunks of at most `max_words` word
/// tokens, cutting at token boundaries. Derived chunks get ids `{id}#{n}`;
/// entries already within the limit keep their id.
pub fn chunk_corpus(chunks: Vec<CorpusChunk>, max_words: usize) -> Result<Vec<CorpusChunk>> {
    if max_words == 0 {
        return Err(Error::Config("chunk size must be >= 1 word".into()));
    }
    let mut out = Vec::new();
    for chunk in chunks {
        let words = textkit::word_tokens(&chunk.text);
        if words.len() <= max_words {
            out.push(chunk);
            continue;
        }
        let mut piece = 0usize;
        let mut start_byte = 0usize;
        let mut i = 0usize;
        while i < words.len() {
            let last = (i + max_words - 1).min(words.len() - 1);
            // Extend through trailing punctuation up to the next word token.
            let end_byte = if last + 1 < words.len() {
                words[last + 1].span.0
            } else {
                chunk.text.len()
            };
            let text = chunk.text[start_byte..end_byte].trim().to_string();
            out.push(CorpusChunk {
                id: format!("{}#{}", chunk.id, piece),
                title: chunk.title.clone(),
                text,
                extra: chunk.extra.clone(),
            });
            piece += 1;
            start_byte = end_byte;
            i = last + 1;
        }
    }
    Ok(out)
}
