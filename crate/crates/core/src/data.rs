//! Dataset records and JSONL file helpers. Unknown fields on records are
//! preserved across a load/save round-trip.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::Task;
use crate::retrieval::CorpusChunk;

/// One training/evaluation unit: a query, its gold answer(s), and the
/// retrieved documents (inline or as corpus chunk references).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub query: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_refs: Option<Vec<String>>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl TrainingExample {
    pub fn new(id: impl Into<String>, query: impl Into<String>, answers: Vec<String>) -> Self {
        TrainingExample {
            id: id.into(),
            query: query.into(),
            answers,
            docs: None,
            doc_refs: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_docs(mut self, docs: Vec<String>) -> Self {
        self.docs = Some(docs);
        self
    }

    /// Inline docs, or refs resolved against the corpus map.
    pub fn resolve_docs(&self, corpus: &BTreeMap<String, CorpusChunk>) -> Result<Vec<String>> {
        match (&self.docs, &self.doc_refs) {
            (Some(docs), None) => Ok(docs.clone()),
            (None, Some(refs)) => refs
                .iter()
                .map(|id| {
                    corpus
                        .get(id)
                        .map(|c| c.text.clone())
                        .ok_or_else(|| Error::UnknownId(id.clone()))
                })
                .collect(),
            (Some(_), Some(_)) => Err(Error::InvalidInput(format!(
                "example {} has both docs and doc_refs",
                self.id
            ))),
            (None, None) => Err(Error::InvalidInput(format!(
                "example {} has neither docs nor doc_refs",
                self.id
            ))),
        }
    }
}

/// Validate a dataset: unique ids, doc presence, and non-empty answers for
/// the QA task.
pub fn validate_dataset(examples: &[TrainingExample], task: Task) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for ex in examples {
        if !seen.insert(ex.id.as_str()) {
            return Err(Error::DuplicateId(ex.id.clone()));
        }
        if ex.docs.is_some() && ex.doc_refs.is_some() {
            return Err(Error::InvalidInput(format!(
                "example {} has both docs and doc_refs",
                ex.id
            )));
        }
        if task == Task::Qa && ex.answers.is_empty() {
            return Err(Error::InvalidInput(format!(
                "example {} has no answers for the qa task",
                ex.id
            )));
        }
    }
    Ok(())
}

/// Read a JSONL file: one JSON object per line, UTF-8, blank lines skipped.
pub fn load_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Write items as JSONL with a trailing newline per line.
pub fn save_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for item in items {
        let line = serde_json::to_string(item)?;
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Load corpus chunks keyed by id, rejecting duplicates.
pub fn load_corpus_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, CorpusChunk>> {
    let chunks: Vec<CorpusChunk> = load_jsonl(path)?;
    let mut map = BTreeMap::new();
    for chunk in chunks {
        let id = chunk.id.clone();
        if map.insert(id.clone(), chunk).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_survive_roundtrip() {
        let line = r#"{"id":"e1","query":"q","answers":["a"],"docs":["d"],"source":"nq","rank":3}"#;
        let ex: TrainingExample = serde_json::from_str(line).unwrap();
        assert_eq!(ex.extra["source"], "nq");
        let back = serde_json::to_string(&ex).unwrap();
        let reparsed: serde_json::Value = serde_json::from_str(&back).unwrap();
        assert_eq!(reparsed["source"], "nq");
        assert_eq!(reparsed["rank"], 3);
    }

    #[test]
    fn resolve_prefers_inline_docs() {
        let ex = TrainingExample::new("e", "q", vec![]).with_docs(vec!["inline".into()]);
        assert_eq!(ex.resolve_docs(&BTreeMap::new()).unwrap(), vec!["inline"]);
    }

    #[test]
    fn resolve_refs_against_corpus() {
        let mut corpus = BTreeMap::new();
        corpus.insert("c1".to_string(), CorpusChunk::new("c1", "", "chunk text"));
        let mut ex = TrainingExample::new("e", "q", vec![]);
        ex.doc_refs = Some(vec!["c1".into()]);
        assert_eq!(ex.resolve_docs(&corpus).unwrap(), vec!["chunk text"]);
        ex.doc_refs = Some(vec!["missing".into()]);
        assert!(matches!(
            ex.resolve_docs(&corpus).unwrap_err(),
            Error::UnknownId(_)
        ));
    }

    #[test]
    fn validate_catches_duplicates_and_missing_answers() {
        let a = TrainingExample::new("x", "q", vec!["a".into()]).with_docs(vec![]);
        let b = TrainingExample::new("x", "q2", vec!["b".into()]).with_docs(vec![]);
        assert!(matches!(
            validate_dataset(&[a.clone(), b], Task::Qa).unwrap_err(),
            Error::DuplicateId(_)
        ));
        let no_answers = TrainingExample::new("y", "q", vec![]).with_docs(vec![]);
        assert!(validate_dataset(&[no_answers.clone()], Task::Qa).is_err());
        assert!(validate_dataset(&[no_answers], Task::Lm).is_ok());
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let items = vec![
            TrainingExample::new("1", "q1", vec!["a".into()]).with_docs(vec!["d1".into()]),
            TrainingExample::new("2", "q2", vec!["b".into()]).with_docs(vec!["d2".into()]),
        ];
        save_jsonl(&path, &items).unwrap();
        let loaded: Vec<TrainingExample> = load_jsonl(&path).unwrap();
        assert_eq!(loaded, items);
    }
}
