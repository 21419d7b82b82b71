//! Input perturbation: token-level augmentation (synonym replacement,
//! random deletion/duplication) and sentence-level paraphrasing, applied
//! to a seeded sample of a document's sentences.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LmBackend;
use crate::seeds::derive_seed;
use crate::textkit::{token_texts, Segmenter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Synonym replacement plus random token deletion/duplication.
    Token,
    /// Sentence-level rewrite through a pluggable paraphraser.
    Paraphrase,
    /// Paraphrase first, then token-level perturbation of the result.
    Compose,
}

/// One perturbation policy. The same policy applies to queries and
/// documents; a query is treated as a one-sentence document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub kind: PolicyKind,
    /// Lowercased word -> candidate synonyms.
    #[serde(default)]
    pub synonym_table: BTreeMap<String, Vec<String>>,
    pub insert_delete_rate: f64,
    pub replace_rate: f64,
    /// Fraction of sentences perturbed per document.
    pub sentence_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            kind: PolicyKind::Token,
            synonym_table: BTreeMap::new(),
            insert_delete_rate: 0.1,
            replace_rate: 0.1,
            sentence_fraction: 0.30,
            seed: 0,
        }
    }
}

impl AugmentationPolicy {
    /// An identity policy: nothing is ever changed.
    pub fn identity() -> Self {
        AugmentationPolicy {
            insert_delete_rate: 0.0,
            replace_rate: 0.0,
            sentence_fraction: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("insert_delete_rate", self.insert_delete_rate),
            ("replace_rate", self.replace_rate),
            ("sentence_fraction", self.sentence_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!(
                    "augmentation {name} must be in [0,1], got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Derive the policy's RNG stream for a stable label (e.g. an example
    /// id), so per-call determinism survives reordering and parallelism.
    pub fn rng_stream(&self, label: &str) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(derive_seed(self.seed, label))
    }
}

/// Load a synonym table: JSON map `word -> [words]`.
pub fn load_synonym_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Counts of edits applied by one `perturb_tokens` call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditLog {
    pub replaced: usize,
    pub deleted: usize,
    pub inserted: usize,
}

/// Token-level perturbation: each token is independently synonym-replaced
/// with probability `replace_rate` (when the table has an entry), then one
/// uniform draw deletes it (p = rate/2) or duplicates it (p = rate/2).
pub fn perturb_tokens(
    tokens: &[String],
    policy: &AugmentationPolicy,
    rng: &mut ChaCha12Rng,
) -> Vec<String> {
    perturb_tokens_logged(tokens, policy, rng).0
}

/// [`perturb_tokens`] plus the edit log used by count-delta checks.
pub fn perturb_tokens_logged(
    tokens: &[String],
    policy: &AugmentationPolicy,
    rng: &mut ChaCha12Rng,
) -> (Vec<String>, EditLog) {
    let mut out = Vec::with_capacity(tokens.len());
    let mut log = EditLog::default();
    for token in tokens {
        let mut current = token.clone();
        if let Some(synonyms) = policy.synonym_table.get(&token.to_lowercase()) {
            if !synonyms.is_empty() && rng.gen::<f64>() < policy.replace_rate {
                current = synonyms[rng.gen_range(0..synonyms.len())].clone();
                log.replaced += 1;
            }
        }
        let draw: f64 = rng.gen();
        if draw < policy.insert_delete_rate / 2.0 {
            log.deleted += 1;
        } else if draw < policy.insert_delete_rate {
            out.push(current.clone());
            out.push(current);
            log.inserted += 1;
        } else {
            out.push(current);
        }
    }
    (out, log)
}

/// Sentence rewriter used by the paraphrase policies.
pub trait Paraphraser {
    fn paraphrase(&self, text: &str) -> Result<String>;
}

/// Default test paraphraser: returns its input.
pub struct IdentityParaphraser;

impl Paraphraser for IdentityParaphraser {
    fn paraphrase(&self, text: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Paraphrase by prompting an LM. `{text}` in the template is replaced
/// with the sentence.
pub struct LmParaphraser<'a> {
    pub backend: &'a LmBackend,
    pub template: String,
}

impl<'a> LmParaphraser<'a> {
    pub fn new(backend: &'a LmBackend) -> Self {
        LmParaphraser {
            backend,
            template: "Paraphrase the following sentence, keeping its meaning:\n{text}"
                .to_string(),
        }
    }
}

impl Paraphraser for LmParaphraser<'_> {
    fn paraphrase(&self, text: &str) -> Result<String> {
        let out = self.backend.generate(&self.template.replace("{text}", text))?;
        if out.trim().is_empty() {
            return Err(Error::InvalidInput("paraphraser returned empty text".into()));
        }
        Ok(out)
    }
}

/// Number of sentences to perturb: ceil(fraction * n), guarded against
/// floating-point drift on exact products.
pub(crate) fn sample_size(fraction: f64, n: usize) -> usize {
    if fraction <= 0.0 || n == 0 {
        return 0;
    }
    (((fraction * n as f64) - 1e-9).ceil() as usize).clamp(0, n)
}

/// Seeded sample of `m` distinct indices in `0..n`, ascending.
pub(crate) fn sample_indices(n: usize, m: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.gen_range(0..n - i);
        pool.swap(i, j);
    }
    let mut picked = pool[..m].to_vec();
    picked.sort_unstable();
    picked
}

/// Join perturbed tokens back into sentence text: single spaces, except no
/// space before closing punctuation and none after opening brackets.
fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    for token in tokens {
        let closing = token.len() == 1
            && matches!(
                token.chars().next().unwrap(),
                '.' | ',' | '!' | '?' | ';' | ':' | ')' | ']' | '}' | '%' | '\''
            );
        let last_opens = matches!(out.chars().last(), Some('(' | '[' | '{'));
        if !out.is_empty() && !closing && !last_opens {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Perturb exactly `ceil(fraction * n_sentences)` seeded-sampled sentences
/// of `text`; the rest stay untouched and sentence order is preserved. A
/// paraphraser failure leaves the sentence unchanged with a warning.
pub fn perturb_document(
    text: &str,
    policy: &AugmentationPolicy,
    paraphraser: &dyn Paraphraser,
    rng: &mut ChaCha12Rng,
    segmenter: &Segmenter,
) -> String {
    let sentences = segmenter.segment(text);
    let m = sample_size(policy.sentence_fraction, sentences.len());
    if m == 0 {
        return text.to_string();
    }
    let selected = sample_indices(sentences.len(), m, rng);
    let mut pieces: Vec<String> = sentences.into_iter().map(|s| s.text).collect();
    for &idx in &selected {
        pieces[idx] = perturb_sentence(&pieces[idx], policy, paraphraser, rng);
    }
    pieces.join(" ")
}

fn perturb_sentence(
    sentence: &str,
    policy: &AugmentationPolicy,
    paraphraser: &dyn Paraphraser,
    rng: &mut ChaCha12Rng,
) -> String {
    let token_pass = |text: &str, rng: &mut ChaCha12Rng| {
        let tokens = token_texts(text);
        let (perturbed, log) = perturb_tokens_logged(&tokens, policy, rng);
        if log == EditLog::default() {
            // No edits: keep the original spelling of the sentence.
            text.to_string()
        } else {
            detokenize(&perturbed)
        }
    };
    match policy.kind {
        PolicyKind::Token => token_pass(sentence, rng),
        PolicyKind::Paraphrase => match paraphraser.paraphrase(sentence) {
            Ok(rewritten) => rewritten,
            Err(e) => {
                log::warn!("paraphraser failed, keeping sentence unchanged: {e}");
                sentence.to_string()
            }
        },
        PolicyKind::Compose => {
            let rewritten = match paraphraser.paraphrase(sentence) {
                Ok(rewritten) => rewritten,
                Err(e) => {
                    log::warn!("paraphraser failed, keeping sentence unchanged: {e}");
                    sentence.to_string()
                }
            };
            token_pass(&rewritten, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn zero_rates_are_identity() {
        let policy = AugmentationPolicy::identity();
        let mut rng = policy.rng_stream("t");
        let input = tokens(&["the", "cat", "sat"]);
        assert_eq!(perturb_tokens(&input, &policy, &mut rng), input);
    }

    #[test]
    fn forced_replacement() {
        let mut policy = AugmentationPolicy::identity();
        policy.replace_rate = 1.0;
        policy
            .synonym_table
            .insert("cat".into(), vec!["feline".into()]);
        let mut rng = policy.rng_stream("t");
        assert_eq!(
            perturb_tokens(&tokens(&["cat"]), &policy, &mut rng),
            tokens(&["feline"])
        );
    }

    #[test]
    fn fixed_seed_reproduces() {
        let mut policy = AugmentationPolicy::default();
        policy.insert_delete_rate = 0.6;
        policy.replace_rate = 0.5;
        policy
            .synonym_table
            .insert("one".into(), vec!["single".into(), "unit".into()]);
        let input = tokens(&["one", "two", "three", "four", "five"]);
        let a = perturb_tokens(&input, &policy, &mut policy.rng_stream("x"));
        let b = perturb_tokens(&input, &policy, &mut policy.rng_stream("x"));
        assert_eq!(a, b);
        let c = perturb_tokens(&input, &policy, &mut policy.rng_stream("y"));
        // Different stream label: almost surely a different draw sequence.
        assert!(a == c || a != c); // both outcomes deterministic; just exercise it
    }

    #[test]
    fn token_count_delta_matches_edit_log() {
        let mut policy = AugmentationPolicy::default();
        policy.insert_delete_rate = 0.8;
        let input = tokens(&["a", "b", "c", "d", "e", "f", "g", "h"]);
        let (out, log) = perturb_tokens_logged(&input, &policy, &mut policy.rng_stream("t"));
        assert_eq!(
            out.len() as i64,
            input.len() as i64 + log.inserted as i64 - log.deleted as i64
        );
    }

    #[test]
    fn fraction_zero_document_unchanged() {
        let policy = AugmentationPolicy::identity();
        let text = "Exact   spacing kept. Even here.";
        let out = perturb_document(
            text,
            &policy,
            &IdentityParaphraser,
            &mut policy.rng_stream("d"),
            &Segmenter::default(),
        );
        assert_eq!(out, text);
    }

    #[test]
    fn fraction_one_identity_paraphraser_unchanged() {
        let mut policy = AugmentationPolicy::identity();
        policy.kind = PolicyKind::Paraphrase;
        policy.sentence_fraction = 1.0;
        let text = "First sentence. Second sentence. Third sentence.";
        let out = perturb_document(
            text,
            &policy,
            &IdentityParaphraser,
            &mut policy.rng_stream("d"),
            &Segmenter::default(),
        );
        assert_eq!(out, text);
    }

    #[test]
    fn thirty_percent_of_ten_sentences_changes_exactly_three() {
        let mut policy = AugmentationPolicy::default();
        policy.replace_rate = 1.0;
        policy.insert_delete_rate = 0.0;
        policy.sentence_fraction = 0.30;
        for word in ["alpha", "beta", "gamma", "delta"] {
            policy
                .synonym_table
                .insert(word.into(), vec![format!("{word}X")]);
        }
        let text: String = (0..10)
            .map(|i| format!("Sentence {i} alpha beta gamma delta."))
            .collect::<Vec<_>>()
            .join(" ");
        let seg = Segmenter::default();
        let out = perturb_document(
            &text,
            &policy,
            &IdentityParaphraser,
            &mut policy.rng_stream("doc"),
            &seg,
        );
        let before: Vec<String> = seg.segment(&text).into_iter().map(|s| s.text).collect();
        let after: Vec<String> = seg.segment(&out).into_iter().map(|s| s.text).collect();
        assert_eq!(before.len(), after.len());
        let differing = before
            .iter()
            .zip(&after)
            .filter(|(b, a)| b != a)
            .count();
        assert_eq!(differing, 3);
    }

    #[test]
    fn paraphrase_policy_preserves_sentence_count() {
        struct Shouty;
        impl Paraphraser for Shouty {
            fn paraphrase(&self, text: &str) -> Result<String> {
                Ok(text.to_uppercase())
            }
        }
        let mut policy = AugmentationPolicy::identity();
        policy.kind = PolicyKind::Paraphrase;
        policy.sentence_fraction = 1.0;
        let text = "One here. Two there. Three gone.";
        let seg = Segmenter::default();
        let out = perturb_document(text, &policy, &Shouty, &mut policy.rng_stream("d"), &seg);
        assert_eq!(seg.segment(&out).len(), seg.segment(text).len());
    }

    #[test]
    fn paraphraser_failure_keeps_sentence() {
        struct Broken;
        impl Paraphraser for Broken {
            fn paraphrase(&self, _text: &str) -> Result<String> {
                Err(Error::InvalidInput("down".into()))
            }
        }
        let mut policy = AugmentationPolicy::identity();
        policy.kind = PolicyKind::Paraphrase;
        policy.sentence_fraction = 1.0;
        let text = "Stays put.";
        let out = perturb_document(
            text,
            &policy,
            &Broken,
            &mut policy.rng_stream("d"),
            &Segmenter::default(),
        );
        assert_eq!(out, text);
    }

    #[test]
    fn compose_paraphrases_then_perturbs_tokens() {
        struct Shouty;
        impl Paraphraser for Shouty {
            fn paraphrase(&self, text: &str) -> Result<String> {
                Ok(text.to_uppercase())
            }
        }
        let mut policy = AugmentationPolicy::identity();
        policy.kind = PolicyKind::Compose;
        policy.sentence_fraction = 1.0;
        policy.replace_rate = 1.0;
        policy
            .synonym_table
            .insert("cat".into(), vec!["lynx".into()]);
        // Token lookup is lowercased, so the synonym applies to "CAT" too.
        let out = perturb_document(
            "The cat naps.",
            &policy,
            &Shouty,
            &mut policy.rng_stream("d"),
            &Segmenter::default(),
        );
        assert_eq!(out, "THE lynx NAPS.");
    }

    #[test]
    fn lm_paraphraser_uses_backend() {
        use crate::lm::{LmBackend, MockScript};
        let backend = LmBackend::mock(
            "t",
            MockScript::default().with_generation(
                "Paraphrase the following sentence, keeping its meaning:\nOld text.",
                "New text.",
            ),
        );
        let paraphraser = LmParaphraser::new(&backend);
        assert_eq!(paraphraser.paraphrase("Old text.").unwrap(), "New text.");
        // Unscripted prompts generate "" which the paraphraser rejects.
        assert!(paraphraser.paraphrase("Other.").is_err());
    }

    #[test]
    fn sample_size_guards_float_drift() {
        assert_eq!(sample_size(0.3, 10), 3);
        assert_eq!(sample_size(0.0, 10), 0);
        assert_eq!(sample_size(1.0, 10), 10);
        assert_eq!(sample_size(0.25, 8), 2);
        assert_eq!(sample_size(0.1, 1), 1);
    }

    #[test]
    fn detokenize_spacing() {
        let toks = tokens(&["The", "cat", ",", "yes", "."]);
        assert_eq!(detokenize(&toks), "The cat, yes.");
    }
}
