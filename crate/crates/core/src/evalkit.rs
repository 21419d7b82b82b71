//! Evaluation: exact match, token-level F1, perplexity, the heuristic
//! baseline compressors, and the harness that turns a dataset plus a
//! compression system into a metrics table with token and timing accounting.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::TrainingExample;
use crate::error::{Error, Result};
use crate::lm::{compose_context, LmBackend, Task};
use crate::textkit::{metric_tokens, normalize_answer, token_count, tokenize, Segmenter, Sentence};

/// 1 iff the normalized prediction equals the normalization of any gold.
pub fn exact_match(prediction: &str, golds: &[String]) -> u8 {
    let pred = normalize_answer(prediction);
    golds
        .iter()
        .any(|g| normalize_answer(g) == pred)
        .then_some(1)
        .unwrap_or(0)
}

/// Bag-of-tokens F1 on normalized tokens, maximized over golds. Both-empty
/// token bags count as a perfect match.
pub fn token_f1(prediction: &str, golds: &[String]) -> f64 {
    let pred_tokens = metric_tokens(prediction);
    golds
        .iter()
        .map(|g| single_f1(&pred_tokens, &metric_tokens(g)))
        .fold(0.0, f64::max)
}

fn single_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::HashMap::new();
    for t in gold {
        *counts.entry(t.as_str()).or_insert(0i64) += 1;
    }
    let mut overlap = 0i64;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    // 2PR/(P+R) reduces to 2*overlap/(|pred|+|gold|).
    2.0 * overlap as f64 / (pred.len() + gold.len()) as f64
}

/// exp(-mean(token_logprobs)).
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::InvalidInput(
            "perplexity needs at least one token logprob".into(),
        ));
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

/// Perplexity from a sequence log-probability total and its token count.
pub fn perplexity_from_total(total_logprob: f64, n_tokens: usize) -> Result<f64> {
    if n_tokens == 0 {
        return Err(Error::InvalidInput("perplexity over zero tokens".into()));
    }
    Ok((-(total_logprob / n_tokens as f64)).exp())
}

/// Heuristic compression baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Bow,
    Ne,
    Random,
    Upperbound,
    PrependTop1,
    PrependTop5,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Bow => "bow",
            BaselineKind::Ne => "ne",
            BaselineKind::Random => "random",
            BaselineKind::Upperbound => "upperbound",
            BaselineKind::PrependTop1 => "prepend_top1",
            BaselineKind::PrependTop5 => "prepend_top5",
        }
    }
}

/// Extra inputs some baselines need: a seed for `random`, an LM backend
/// plus golds for `upperbound`.
pub struct BaselineAux<'a> {
    pub seed: Option<u64>,
    pub backend: Option<&'a LmBackend>,
    pub task: Option<Task>,
    pub golds: Option<&'a [String]>,
    pub score_template: &'a str,
}

impl Default for BaselineAux<'_> {
    fn default() -> Self {
        BaselineAux {
            seed: None,
            backend: None,
            task: None,
            golds: None,
            score_template: crate::lm::DEFAULT_SCORE_TEMPLATE,
        }
    }
}

const NE_STOPWORDS: &[&str] = &[
    "the", "a", "an", "in", "on", "at", "of", "to", "and", "or", "but", "it", "he", "she",
    "they", "we", "you", "i", "this", "that", "these", "those", "as", "by", "for", "with",
    "from", "is", "are", "was", "were", "be", "been", "his", "her", "its", "their", "our",
    "my", "your", "so", "if", "then", "than", "when", "while", "after", "before", "not", "no",
];

/// Compress `docs` with the chosen heuristic baseline.
pub fn baseline_compress(
    kind: BaselineKind,
    query: &str,
    docs: &[String],
    aux: &BaselineAux<'_>,
    segmenter: &Segmenter,
) -> Result<String> {
    if docs.is_empty() {
        return Err(Error::InvalidInput("baseline needs at least one doc".into()));
    }
    match kind {
        BaselineKind::Bow => Ok(bag_of_words(docs)),
        BaselineKind::Ne => Ok(named_entities(docs, segmenter)),
        BaselineKind::Random => {
            let seed = aux
                .seed
                .ok_or_else(|| Error::InvalidInput("random baseline needs a seed".into()))?;
            let sentences = all_sentences(docs, segmenter);
            if sentences.is_empty() {
                return Err(Error::InvalidInput("no sentences to sample".into()));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let pick = rng.gen_range(0..sentences.len());
            Ok(sentences[pick].text.clone())
        }
        BaselineKind::Upperbound => {
            let backend = aux.backend.ok_or_else(|| {
                Error::InvalidInput("upperbound baseline needs an LM backend".into())
            })?;
            let golds = aux
                .golds
                .ok_or_else(|| Error::InvalidInput("upperbound baseline needs golds".into()))?;
            let task = aux
                .task
                .ok_or_else(|| Error::InvalidInput("upperbound baseline needs a task".into()))?;
            let sentences = all_sentences(docs, segmenter);
            if sentences.is_empty() {
                return Err(Error::InvalidInput("no sentences to scan".into()));
            }
            let mut best: Option<(f64, &Sentence)> = None;
            for s in &sentences {
                let context = compose_context(aux.score_template, Some(&s.text), query);
                let score = backend.score_candidate(task, golds, &context)?;
                if best.map(|(b, _)| score > b).unwrap_or(true) {
                    best = Some((score, s));
                }
            }
            Ok(best.expect("nonempty scan").1.text.clone())
        }
        BaselineKind::PrependTop1 => Ok(docs[0].clone()),
        BaselineKind::PrependTop5 => Ok(docs
            .iter()
            .take(5)
            .cloned()
            .collect::<Vec<_>>()
            .join("\n\n")),
    }
}

fn bag_of_words(docs: &[String]) -> String {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for doc in docs {
        for token in tokenize(doc) {
            if !token.text.chars().any(|c| c.is_alphanumeric()) {
                continue;
            }
            if seen.insert(token.text.clone()) {
                out.push(token.text);
            }
        }
    }
    out.join(" ")
}

/// Maximal runs of capitalized word tokens; a lone sentence-initial
/// stopword is not an entity.
fn named_entities(docs: &[String], segmenter: &Segmenter) -> String {
    let mut entities: Vec<String> = Vec::new();
    for doc in docs {
        for sentence in segmenter.segment(doc) {
            let tokens = tokenize(&sentence.text);
            let mut run: Vec<(usize, String)> = Vec::new();
            let mut word_pos = 0usize;
            for token in tokens {
                let is_word = token.text.chars().any(|c| c.is_alphanumeric());
                let capitalized = is_word
                    && token
                        .text
                        .chars()
                        .next()
                        .map(|c| c.is_uppercase())
                        .unwrap_or(false);
                if capitalized {
                    run.push((word_pos, token.text.clone()));
                } else {
                    flush_entity_run(&mut run, &mut entities);
                }
                if is_word {
                    word_pos += 1;
                }
            }
            flush_entity_run(&mut run, &mut entities);
        }
    }
    entities.join(" ")
}

fn flush_entity_run(run: &mut Vec<(usize, String)>, entities: &mut Vec<String>) {
    if run.is_empty() {
        return;
    }
    let sentence_initial_lone = run.len() == 1 && run[0].0 == 0;
    let is_stopword = run.len() == 1 && NE_STOPWORDS.contains(&run[0].1.to_lowercase().as_str());
    if !(sentence_initial_lone && is_stopword) {
        entities.push(
            run.iter()
                .map(|(_, t)| t.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    run.clear();
}

fn all_sentences(docs: &[String], segmenter: &Segmenter) -> Vec<Sentence> {
    docs.iter()
        .enumerate()
        .flat_map(|(i, doc)| segmenter.segment_doc(&i.to_string(), doc))
        .collect()
}

/// A compression system under evaluation.
pub trait Compressor {
    fn name(&self) -> &str;
    fn compress(&self, input: &EvalInput<'_>) -> Result<String>;
}

/// One dataset record as seen by a compressor.
pub struct EvalInput<'a> {
    pub id: &'a str,
    pub query: &'a str,
    pub golds: &'a [String],
    pub docs: &'a [String],
}

/// The no-context system: empty compressed context, token count 0.
pub struct NoContext;

impl Compressor for NoContext {
    fn name(&self) -> &str {
        "none"
    }

    fn compress(&self, _input: &EvalInput<'_>) -> Result<String> {
        Ok(String::new())
    }
}

/// Adapter turning a closure into a named compressor.
pub struct FnCompressor<F> {
    name: String,
    f: F,
}

impl<F> FnCompressor<F>
where
    F: Fn(&EvalInput<'_>) -> Result<String>,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnCompressor {
            name: name.into(),
            f,
        }
    }
}

impl<F> Compressor for FnCompressor<F>
where
    F: Fn(&EvalInput<'_>) -> Result<String>,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn compress(&self, input: &EvalInput<'_>) -> Result<String> {
        (self.f)(input)
    }
}

/// Per-record evaluation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub query: String,
    pub golds: Vec<String>,
    pub context: String,
    pub token_count: usize,
    pub generation_ms: f64,
    pub inference_ms: f64,
    pub total_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregate metrics for one system; means over non-failed records,
/// timings summed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsTable {
    pub system: String,
    pub task: Task,
    pub records: usize,
    pub failed: usize,
    pub mean_tokens: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
    pub generation_ms_total: f64,
    pub inference_ms_total: f64,
    pub total_ms_total: f64,
}

/// Harness configuration.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub score_template: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            score_template: crate::lm::DEFAULT_SCORE_TEMPLATE.to_string(),
        }
    }
}

/// Evaluate `system` over `dataset`: compress, prompt the backend, collect
/// metrics plus token and wall-clock accounting. Per-record failures are
/// recorded and excluded from aggregates.
pub fn run_eval(
    dataset: &[TrainingExample],
    system: &dyn Compressor,
    task: Task,
    backend: &LmBackend,
    cfg: &EvalConfig,
) -> Result<(MetricsTable, Vec<EvalRecord>)> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty evaluation dataset".into()));
    }
    let mut records = Vec::with_capacity(dataset.len());
    for example in dataset {
        records.push(eval_one(example, system, task, backend, cfg));
    }

    let ok: Vec<&EvalRecord> = records.iter().filter(|r| !r.failed).collect();
    let n = ok.len() as f64;
    let mean = |f: &dyn Fn(&EvalRecord) -> f64| -> f64 {
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / n
        }
    };
    let mean_opt = |f: &dyn Fn(&EvalRecord) -> Option<f64>| -> Option<f64> {
        if ok.is_empty() || ok.iter().any(|r| f(r).is_none()) {
            None
        } else {
            Some(ok.iter().map(|r| f(r).unwrap()).sum::<f64>() / n)
        }
    };

    let table = MetricsTable {
        system: system.name().to_string(),
        task,
        records: records.len(),
        failed: records.len() - ok.len(),
        mean_tokens: mean(&|r| r.token_count as f64),
        em: mean_opt(&|r| r.em),
        f1: mean_opt(&|r| r.f1),
        ppl: mean_opt(&|r| r.ppl),
        generation_ms_total: ok.iter().map(|r| r.generation_ms).sum(),
        inference_ms_total: ok.iter().map(|r| r.inference_ms).sum(),
        total_ms_total: ok.iter().map(|r| r.total_ms).sum(),
    };
    Ok((table, records))
}

fn eval_one(
    example: &TrainingExample,
    system: &dyn Compressor,
    task: Task,
    backend: &LmBackend,
    cfg: &EvalConfig,
) -> EvalRecord {
    let docs = example.docs.clone().unwrap_or_default();
    let input = EvalInput {
        id: &example.id,
        query: &example.query,
        golds: &example.answers,
        docs: &docs,
    };
    let mut record = EvalRecord {
        id: example.id.clone(),
        query: example.query.clone(),
        golds: example.answers.clone(),
        context: String::new(),
        token_count: 0,
        generation_ms: 0.0,
        inference_ms: 0.0,
        total_ms: 0.0,
        em: None,
        f1: None,
        ppl: None,
        failed: false,
        error: None,
    };

    let gen_start = Instant::now();
    let context = match system.compress(&input) {
        Ok(c) => c,
        Err(e) => {
            record.failed = true;
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.generation_ms = gen_start.elapsed().as_secs_f64() * 1e3;
    record.token_count = token_count(&context);
    record.context = context;

    let prompt = if record.context.is_empty() {
        compose_context(&cfg.score_template, None, &example.query)
    } else {
        compose_context(&cfg.score_template, Some(&record.context), &example.query)
    };

    let infer_start = Instant::now();
    let outcome: Result<()> = (|| {
        match task {
            Task::Qa => {
                let prediction = backend.generate(&prompt)?;
                record.em = Some(exact_match(&prediction, &example.answers) as f64);
                record.f1 = Some(token_f1(&prediction, &example.answers));
            }
            Task::Lm => {
                let continuation = example.answers.first().ok_or_else(|| {
                    Error::InvalidInput(format!("example {} has no continuation", example.id))
                })?;
                let total = backend.sequence_logprob(&prompt, continuation)?;
                let n = token_count(continuation);
                record.ppl = Some(perplexity_from_total(total, n)?);
            }
        }
        Ok(())
    })();
    record.inference_ms = infer_start.elapsed().as_secs_f64() * 1e3;
    record.total_ms = record.generation_ms + record.inference_ms;

    if let Err(e) = outcome {
        record.failed = true;
        record.error = Some(e.to_string());
    }
    record
}

/// Render metrics tables as aligned text, one row per system.
pub fn render_metrics_tables(tables: &[MetricsTable]) -> String {
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    };
    let mut rows = vec![vec![
        "system".to_string(),
        "records".to_string(),
        "failed".to_string(),
        "tokens".to_string(),
        "EM".to_string(),
        "F1".to_string(),
        "PPL".to_string(),
        "gen_ms".to_string(),
        "infer_ms".to_string(),
        "total_ms".to_string(),
    ]];
    for t in tables {
        rows.push(vec![
            t.system.clone(),
            t.records.to_string(),
            t.failed.to_string(),
            format!("{:.2}", t.mean_tokens),
            fmt_opt(t.em),
            fmt_opt(t.f1),
            fmt_opt(t.ppl),
            format!("{:.1}", t.generation_ms_total),
            format!("{:.1}", t.inference_ms_total),
            format!("{:.1}", t.total_ms_total),
        ]);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::MockScript;

    #[test]
    fn exact_match_normalizes() {
        assert_eq!(exact_match("The Cat!", &["cat".into()]), 1);
        assert_eq!(exact_match("dog", &["cat".into()]), 0);
        assert_eq!(
            exact_match("b", &["a".into(), "b".into(), "c".into()]),
            1
        );
    }

    #[test]
    fn token_f1_examples() {
        assert_eq!(token_f1("same words", &["same words".into()]), 1.0);
        // P = R = 2/3 exactly: article tokens stay in the F1 bag.
        assert_eq!(token_f1("a b c", &["b c d".into()]), 2.0 / 3.0);
        assert_eq!(token_f1("xyz", &["abc".into()]), 0.0);
    }

    #[test]
    fn token_f1_at_least_exact_match() {
        let cases = [("The Cat!", "the cat"), ("a b", "b a"), ("x", "y")];
        for (pred, gold) in cases {
            let golds = vec![gold.to_string()];
            let em = exact_match(pred, &golds) as f64;
            assert!(token_f1(pred, &golds) >= em);
        }
    }

    #[test]
    fn perplexity_uniform_and_certain() {
        let lp = (1.0f64 / 100.0).ln();
        let ppl = perplexity(&vec![lp; 7]).unwrap();
        assert!((ppl - 100.0).abs() < 1e-9 * 100.0);
        assert_eq!(perplexity(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(perplexity(&[]).is_err());
    }

    #[test]
    fn perplexity_matches_scalar_recomputation() {
        let lps = [-0.5, -1.25, -2.0, -0.1];
        let mean = lps.iter().sum::<f64>() / 4.0;
        assert_eq!(perplexity(&lps).unwrap(), (-mean).exp());
    }

    #[test]
    fn perplexity_permutation_invariant() {
        let a = perplexity(&[-0.5, -1.0, -2.0]).unwrap();
        let b = perplexity(&[-2.0, -0.5, -1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bow_dedups_in_order() {
        let docs = vec!["a b a c".to_string()];
        let out = baseline_compress(
            BaselineKind::Bow,
            "q",
            &docs,
            &BaselineAux::default(),
            &Segmenter::default(),
        )
        .unwrap();
        assert_eq!(out, "a b c");
    }

    #[test]
    fn ne_capitalization_heuristic() {
        let docs = vec!["The president met Barack Obama in Paris".to_string()];
        let out = baseline_compress(
            BaselineKind::Ne,
            "q",
            &docs,
            &BaselineAux::default(),
            &Segmenter::default(),
        )
        .unwrap();
        assert_eq!(out, "Barack Obama Paris");
    }

    #[test]
    fn random_baseline_is_seeded() {
        let docs = vec!["One here. Two there. Three everywhere.".to_string()];
        let aux = BaselineAux {
            seed: Some(11),
            ..Default::default()
        };
        let a =
            baseline_compress(BaselineKind::Random, "q", &docs, &aux, &Segmenter::default())
                .unwrap();
        let b =
            baseline_compress(BaselineKind::Random, "q", &docs, &aux, &Segmenter::default())
                .unwrap();
        assert_eq!(a, b);
        assert!(docs[0].contains(&a));
    }

    #[test]
    fn upperbound_matches_exhaustive_scan() {
        let docs = vec!["Alpha fact. Beta fact. Gamma fact.".to_string()];
        let golds = vec!["gold".to_string()];
        let query = "q";
        let mut script = MockScript::default();
        for (sent, lp) in [
            ("Alpha fact.", -4.0),
            ("Beta fact.", -1.0),
            ("Gamma fact.", -2.0),
        ] {
            script = script
                .with_logprob(&format!("{sent}\n\n{query}"), "gold", lp)
                .unwrap();
        }
        let backend = LmBackend::mock("m", script);
        let aux = BaselineAux {
            backend: Some(&backend),
            task: Some(Task::Lm),
            golds: Some(&golds),
            ..Default::default()
        };
        let out = baseline_compress(
            BaselineKind::Upperbound,
            query,
            &docs,
            &aux,
            &Segmenter::default(),
        )
        .unwrap();
        assert_eq!(out, "Beta fact.");
    }

    #[test]
    fn prepend_baselines() {
        let docs: Vec<String> = (0..7).map(|i| format!("doc {i}")).collect();
        let aux = BaselineAux::default();
        let seg = Segmenter::default();
        assert_eq!(
            baseline_compress(BaselineKind::PrependTop1, "q", &docs, &aux, &seg).unwrap(),
            "doc 0"
        );
        let top5 = baseline_compress(BaselineKind::PrependTop5, "q", &docs, &aux, &seg).unwrap();
        assert_eq!(top5, "doc 0\n\ndoc 1\n\ndoc 2\n\ndoc 3\n\ndoc 4");
    }

    fn qa_example(id: &str, query: &str, answer: &str, docs: Vec<String>) -> TrainingExample {
        TrainingExample {
            id: id.into(),
            query: query.into(),
            answers: vec![answer.into()],
            docs: Some(docs),
            doc_refs: None,
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn run_eval_singleton_mean_and_zero_tokens() {
        let example = qa_example("e1", "what is it", "cat", vec!["The cat sat.".into()]);
        let backend = LmBackend::mock(
            "m",
            MockScript::default().with_generation("what is it", "the cat"),
        );
        let (table, records) = run_eval(
            &[example],
            &NoContext,
            Task::Qa,
            &backend,
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(table.em, Some(1.0));
        assert_eq!(table.mean_tokens, 0.0);
        assert_eq!(records[0].token_count, 0);
    }

    #[test]
    fn run_eval_lm_task_reports_ppl() {
        let example = qa_example("e1", "ctx words", "gold continuation", vec!["d".into()]);
        let script = MockScript::default()
            .with_logprob("ctx words", "gold continuation", -4.0)
            .unwrap();
        let backend = LmBackend::mock("m", script);
        let (table, _) = run_eval(
            &[example],
            &NoContext,
            Task::Lm,
            &backend,
            &EvalConfig::default(),
        )
        .unwrap();
        // two word tokens in the continuation
        let expected = (-(-4.0f64 / 2.0)).exp();
        assert_eq!(table.ppl, Some(expected));
        assert_eq!(table.em, None);
    }

    #[test]
    fn run_eval_identical_mocks_identical_aggregates() {
        let examples = vec![
            qa_example("a", "q1", "x", vec!["X is here.".into()]),
            qa_example("b", "q2", "y", vec!["Y is here.".into()]),
        ];
        let backend = LmBackend::mock("m", MockScript::default());
        let run = |name: &str| {
            let system = FnCompressor::new(name, |input: &EvalInput<'_>| {
                Ok(input.docs.first().cloned().unwrap_or_default())
            });
            run_eval(&examples, &system, Task::Qa, &backend, &EvalConfig::default())
                .unwrap()
                .0
        };
        let (t1, t2) = (run("s1"), run("s2"));
        assert_eq!(t1.em, t2.em);
        assert_eq!(t1.f1, t2.f1);
        assert_eq!(t1.mean_tokens, t2.mean_tokens);
    }

    #[test]
    fn run_eval_rejects_empty_dataset() {
        let backend = LmBackend::mock("m", MockScript::default());
        assert!(run_eval(&[], &NoContext, Task::Qa, &backend, &EvalConfig::default()).is_err());
    }

    #[test]
    fn run_eval_failures_excluded_and_counted() {
        let examples = vec![
            qa_example("good", "q", "x", vec!["doc".into()]),
            qa_example("bad", "q2", "x", vec![]),
        ];
        let backend = LmBackend::mock("m", MockScript::default());
        let system = FnCompressor::new("first-doc", |input: &EvalInput<'_>| {
            input
                .docs
                .first()
                .cloned()
                .ok_or_else(|| Error::InvalidInput("no docs".into()))
        });
        let (table, records) =
            run_eval(&examples, &system, Task::Qa, &backend, &EvalConfig::default()).unwrap();
        assert_eq!(table.records, 2);
        assert_eq!(table.failed, 1);
        assert!(records[1].failed);
        assert!(records[1].error.is_some());
    }

    #[test]
    fn render_table_has_header_and_rows() {
        let table = MetricsTable {
            system: "none".into(),
            task: Task::Qa,
            records: 2,
            failed: 0,
            mean_tokens: 0.0,
            em: Some(0.5),
            f1: Some(0.6),
            ppl: None,
            generation_ms_total: 1.0,
            inference_ms_total: 2.0,
            total_ms_total: 3.0,
        };
        let text = render_metrics_tables(&[table]);
        assert!(text.lines().count() == 2);
        assert!(text.starts_with("system"));
        assert!(text.contains("none"));
    }
}
