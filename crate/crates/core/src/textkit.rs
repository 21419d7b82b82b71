//! Tokenization, sentence segmentation, and answer normalization.
//!
//! Everything downstream (indexing, metrics, selection) counts and splits
//! text through this module, so all three operations are deterministic and
//! dependency-free.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A token with its byte span in the source text.
///
/// Word tokens are maximal runs of alphanumeric characters; every other
/// non-whitespace character becomes a single-character token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Byte offsets `[start, end)` into the source.
    pub span: (usize, usize),
}

/// A sentence within a source document. Joining a document's sentences in
/// `index` order with single spaces reproduces the whitespace-normalized
/// document text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub doc_id: String,
    pub index: usize,
}

/// Split text on whitespace and punctuation boundaries. Punctuation is
/// emitted as separate single-character tokens; case never affects the
/// split. Empty input yields an empty list.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (pos, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(pos);
            }
        } else {
            if let Some(start) = word_start.take() {
                tokens.push(Token {
                    text: text[start..pos].to_string(),
                    span: (start, pos),
                });
            }
            if !ch.is_whitespace() {
                let end = pos + ch.len_utf8();
                tokens.push(Token {
                    text: text[pos..end].to_string(),
                    span: (pos, end),
                });
            }
        }
    }
    if let Some(start) = word_start {
        tokens.push(Token {
            text: text[start..].to_string(),
            span: (start, text.len()),
        });
    }
    tokens
}

/// Token texts only.
pub fn token_texts(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Number of tokens produced by [`tokenize`]. This is the "word token"
/// count reported by the harness (not a model tokenizer's count).
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Word tokens only (tokens containing an alphanumeric character),
/// excluding standalone punctuation.
pub fn word_tokens(text: &str) -> Vec<Token> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.text.chars().any(|c| c.is_alphanumeric()))
        .collect()
}

/// Collapse runs of whitespace to single spaces and trim.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Rule-based sentence segmenter with a configurable abbreviation list.
///
/// Splits after terminal punctuation (`.` `!` `?`) followed by whitespace
/// and an uppercase letter, or at end of text. A period ending a listed
/// abbreviation never splits.
#[derive(Debug, Clone)]
pub struct Segmenter {
    /// Lowercased abbreviations, stored as written including the period
    /// (e.g. `"mr."`, `"e.g."`).
    abbreviations: HashSet<String>,
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.", "i.e.",
    "cf.", "al.", "no.", "fig.", "vol.", "dept.", "approx.", "inc.", "ltd.", "co.", "u.s.",
    "u.k.",
];

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::new(DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()))
    }
}

impl Segmenter {
    pub fn new(abbreviations: impl IntoIterator<Item = String>) -> Self {
        Segmenter {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.trim().to_lowercase())
                .filter(|a| !a.is_empty())
                .collect(),
        }
    }

    /// Load an abbreviation list: plain text, one abbreviation per line,
    /// UTF-8. Blank lines and `#` comment lines are ignored.
    pub fn from_abbreviation_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Segmenter::new(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_string()),
        ))
    }

    /// Segment `text` into sentences with an empty `doc_id`.
    pub fn segment(&self, text: &str) -> Vec<Sentence> {
        self.segment_doc("", text)
    }

    /// Segment `text` into sentences attributed to `doc_id`; indices are
    /// dense from 0.
    pub fn segment_doc(&self, doc_id: &str, text: &str) -> Vec<Sentence> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut boundaries: Vec<usize> = Vec::new(); // byte offset just past a sentence end

        for (i, &(pos, ch)) in chars.iter().enumerate() {
            if !matches!(ch, '.' | '!' | '?') {
                continue;
            }
            // Split only after the last terminal of a run ("Hi!!").
            if let Some(&(_, next)) = chars.get(i + 1) {
                if matches!(next, '.' | '!' | '?') {
                    continue;
                }
                // Terminal must be followed by whitespace...
                if !next.is_whitespace() {
                    continue;
                }
                // ...and then an uppercase letter.
                let upper_follows = chars[i + 1..]
                    .iter()
                    .find(|(_, c)| !c.is_whitespace())
                    .map(|(_, c)| c.is_uppercase())
                    .unwrap_or(false);
                if !upper_follows {
                    continue;
                }
                if ch == '.' && self.is_abbreviation_end(text, pos) {
                    continue;
                }
                boundaries.push(pos + ch.len_utf8());
            }
            // End of text needs no explicit boundary; the tail flush below
            // emits the final sentence.
        }

        let mut sentences = Vec::new();
        let mut start = 0;
        for end in boundaries.into_iter().chain(std::iter::once(text.len())) {
            let piece = normalize_whitespace(&text[start..end]);
            if !piece.is_empty() {
                sentences.push(Sentence {
                    text: piece,
                    doc_id: doc_id.to_string(),
                    index: sentences.len(),
                });
            }
            start = end;
        }
        sentences
    }

    /// True when the word ending at the period at byte `period_pos` is a
    /// listed abbreviation.
    fn is_abbreviation_end(&self, text: &str, period_pos: usize) -> bool {
        let head = &text[..period_pos];
        let word_start = head
            .rfind(|c: char| c.is_whitespace())
            .map(|p| p + 1)
            .unwrap_or(0);
        let candidate = text[word_start..=period_pos].to_lowercase();
        self.abbreviations.contains(&candidate)
    }
}

/// Segment with the default abbreviation list.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    Segmenter::default().segment(text)
}

/// Standard open-domain QA answer normalization: lowercase, strip
/// punctuation, drop articles (a, an, the), collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct: String = lower
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The token bag used by the F1 metric: lowercased, punctuation stripped,
/// whitespace split. Articles stay in the bag (unlike [`normalize_answer`],
/// whose article removal only feeds exact match).
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(|s| s.to_string())
        .collect()
}
