//! Contrastive training-data construction: an LM-scored positive sentence,
//! similarity-ranked semi-positives with inverse-gap weights, and negatives.
//!
//! For each example the LM picks the best-scoring sentence as the positive.
//! The remaining sentences are ranked by adapted-embedding similarity to
//! the query; candidates within `delta` of the top similarity become
//! semi-positives weighted by the inverse gap (clamped to `w_max`), the
//! rest become negatives. Examples lacking either side are filtered out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::TrainingExample;
use crate::embedding::{inner_product, AdapterMatrix, EncoderBackend};
use crate::error::{Error, Result};
use crate::lm::{compose_context, LmBackend, Task};
use crate::textkit::{Segmenter, Sentence};

/// Floor applied to a zero similarity gap before taking its inverse.
pub const GAP_FLOOR: f64 = 1e-6;

/// Build parameters: candidate cutoff `k`, gap threshold `delta`, weight
/// clamp `w_max`, and the softmax temperature `tau` consumed downstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveBuildConfig {
    pub k: usize,
    pub delta: f64,
    pub w_max: f64,
    pub tau: f64,
}

impl Default for ContrastiveBuildConfig {
    fn default() -> Self {
        ContrastiveBuildConfig {
            k: 16,
            delta: 0.1,
            w_max: 100.0,
            tau: 0.05,
        }
    }
}

impl ContrastiveBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("contrastive k must be >= 2, got {}", self.k)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!(
                "contrastive delta must be > 0, got {}",
                self.delta
            )));
        }
        if !(self.w_max > 0.0) {
            return Err(Error::Config(format!(
                "contrastive w_max must be > 0, got {}",
                self.w_max
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "contrastive tau must be > 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// A semi-positive sentence and its contrastive weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSentence {
    pub sentence: Sentence,
    pub weight: f64,
}

/// One line of triples.jsonl: the query anchored at its positive sentence,
/// with weighted semi-positives and negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveExample {
    pub query: String,
    pub positive: Sentence,
    pub semi_positives: Vec<WeightedSentence>,
    pub negatives: Vec<Sentence>,
}

/// Why an example produced no contrastive example.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SkipReason {
    TooFewSentences,
    NoSemiPositives,
    NoNegatives,
    Backend(String),
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::TooFewSentences => write!(f, "too few sentences"),
            SkipReason::NoSemiPositives => write!(f, "no semi-positives"),
            SkipReason::NoNegatives => write!(f, "no negatives"),
            SkipReason::Backend(msg) => write!(f, "backend error: {msg}"),
        }
    }
}

/// Per-example build result.
#[derive(Debug, Clone)]
pub enum BuildOutcome {
    Built(Box<ContrastiveExample>),
    Skipped(SkipReason),
}

/// Skip accounting for a dataset build.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub built: usize,
    pub skipped: BTreeMap<String, usize>,
}

impl BuildReport {
    fn record_skip(&mut self, reason: &SkipReason) {
        *self.skipped.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn total_skipped(&self) -> usize {
        self.skipped.values().sum()
    }
}

/// Everything the builder needs besides the dataset itself.
pub struct ContrastiveBuilder<'a> {
    pub encoder: &'a EncoderBackend,
    pub adapter: &'a AdapterMatrix,
    pub backend: &'a LmBackend,
    pub task: Task,
    pub segmenter: &'a Segmenter,
    pub score_template: &'a str,
    pub cfg: ContrastiveBuildConfig,
}

/// The sentence maximizing the LM score of `[sentence; query]`; ties break
/// toward the lowest flattened sentence position.
pub fn lm_best_sentence<'s>(
    backend: &LmBackend,
    task: Task,
    golds: &[String],
    query: &str,
    sentences: &'s [Sentence],
    score_template: &str,
) -> Result<&'s Sentence> {
    if sentences.is_empty() {
        return Err(Error::InvalidInput("no sentences to score".into()));
    }
    let mut best: Option<(f64, &Sentence)> = None;
    for sentence in sentences {
        let context = compose_context(score_template, Some(&sentence.text), query);
        let score = backend.score_candidate(task, golds, &context)?;
        if best.map(|(b, _)| score > b).unwrap_or(true) {
            best = Some((score, sentence));
        }
    }
    Ok(best.expect("nonempty candidate list").1)
}

/// Partition similarity-ranked candidates into weighted semi-positives and
/// negatives. `ranked` must be sorted by descending similarity; the gap of
/// each candidate is measured against the top candidate's similarity.
pub fn partition_candidates(
    ranked: &[(Sentence, f64)],
    cfg: &ContrastiveBuildConfig,
) -> (Vec<WeightedSentence>, Vec<Sentence>) {
    let mut semi = Vec::new();
    let mut negatives = Vec::new();
    let Some(&(_, top_sim)) = ranked.first() else {
        return (semi, negatives);
    };
    for (sentence, sim) in ranked {
        let gap = top_sim - sim;
        if gap < cfg.delta {
            let weight = (1.0 / gap.max(GAP_FLOOR)).min(cfg.w_max);
            semi.push(WeightedSentence {
                sentence: sentence.clone(),
                weight,
            });
        } else {
            negatives.push(sentence.clone());
        }
    }
    (semi, negatives)
}

impl ContrastiveBuilder<'_> {
    /// Run the construction for one example. Returns `Skipped` when the
    /// docs yield fewer than two sentences or when either candidate side
    /// ends up empty.
    pub fn build_example(&self, example: &TrainingExample) -> Result<BuildOutcome> {
        self.cfg.validate()?;
        let docs = example.docs.clone().ok_or_else(|| {
            Error::InvalidInput(format!("example {} has no inline docs", example.id))
        })?;
        let sentences: Vec<Sentence> = docs
            .iter()
            .enumerate()
            .flat_map(|(i, doc)| self.segmenter.segment_doc(&i.to_string(), doc))
            .collect();
        if sentences.len() < 2 {
            return Ok(BuildOutcome::Skipped(SkipReason::TooFewSentences));
        }

        let positive = lm_best_sentence(
            self.backend,
            self.task,
            &example.answers,
            &example.query,
            &sentences,
            self.score_template,
        )?
        .clone();

        let query_emb = self.adapter.apply(&self.encoder.embed(&example.query)?)?;
        let mut ranked: Vec<(Sentence, f64)> = Vec::with_capacity(sentences.len() - 1);
        for sentence in sentences {
            if sentence == positive {
                continue;
            }
            let emb = self.adapter.apply(&self.encoder.embed(&sentence.text)?)?;
            ranked.push((sentence, inner_product(&query_emb, &emb)?));
        }
        // Stable sort keeps original document order among equal similarities.
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        ranked.truncate(self.cfg.k);

        let (semi_positives, negatives) = partition_candidates(&ranked, &self.cfg);
        if semi_positives.is_empty() {
            return Ok(BuildOutcome::Skipped(SkipReason::NoSemiPositives));
        }
        if negatives.is_empty() {
            return Ok(BuildOutcome::Skipped(SkipReason::NoNegatives));
        }
        Ok(BuildOutcome::Built(Box::new(ContrastiveExample {
            query: example.query.clone(),
            positive,
            semi_positives,
            negatives,
        })))
    }

    /// Build the whole dataset. Skips are dropped (and counted); output
    /// order follows input order; per-example backend errors become skips.
    pub fn build_dataset(
        &self,
        examples: &[TrainingExample],
    ) -> (Vec<ContrastiveExample>, BuildReport) {
        let mut out = Vec::new();
        let mut report = BuildReport::default();
        for example in examples {
            match self.build_example(example) {
                Ok(BuildOutcome::Built(ex)) => {
                    report.built += 1;
                    out.push(*ex);
                }
                Ok(BuildOutcome::Skipped(reason)) => report.record_skip(&reason),
                Err(e) => {
                    log::warn!("example {}: {e}", example.id);
                    report.record_skip(&SkipReason::Backend(e.to_string()));
                }
            }
        }
        (out, report)
    }
}
