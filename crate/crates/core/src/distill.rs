//! Distilled training-data construction: teacher candidates scored by the
//! student, selector extracts ranked against the teacher summary, and the
//! two-stage (clean / perturbed) record sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationPolicy, Paraphraser};
use crate::data::TrainingExample;
use crate::embedding::{inner_product, AdapterMatrix, EncoderBackend};
use crate::error::{Error, Result};
use crate::lm::{compose_context, LmBackend, Task};
use crate::selector::select_sentences;
use crate::seeds::derive_seed;
use crate::textkit::Segmenter;

/// Prompt templates for teacher summary generation. Every template must
/// contain both `{query}` and `{docs}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    templates: Vec<String>,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        PromptTemplateSet {
            templates: vec![
                "Summarize the information needed to answer the question.\n\nQuestion: {query}\n\nDocuments:\n{docs}\n\nSummary:".to_string(),
                "Extract the facts from the documents that answer the question.\n\nQuestion: {query}\n\nDocuments:\n{docs}\n\nFacts:".to_string(),
                "Write a short context that contains only what is needed to answer the question.\n\nQuestion: {query}\n\nDocuments:\n{docs}\n\nContext:".to_string(),
            ],
        }
    }
}

impl PromptTemplateSet {
    pub fn new(templates: Vec<String>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::Config("template set must not be empty".into()));
        }
        for (i, template) in templates.iter().enumerate() {
            if !template.contains("{query}") || !template.contains("{docs}") {
                return Err(Error::Config(format!(
                    "template {i} must contain both {{query}} and {{docs}}"
                )));
            }
        }
        Ok(PromptTemplateSet { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn render(&self, index: usize, query: &str, docs: &[String]) -> String {
        self.templates[index]
            .replace("{query}", query)
            .replace("{docs}", &docs.join("\n"))
    }
}

/// One line of distill.jsonl. `target` is the selector extract alone when
/// the teacher summary is absent, otherwise `"{extract} {teacher}"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledRecord {
    pub stage: u8,
    pub query: String,
    pub docs: Vec<String>,
    pub target: String,
    pub selector_extract: String,
    pub teacher_summary: Option<String>,
    pub augmented: bool,
}

/// Builder configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillConfig {
    /// Candidate sentences the selector passes to the extract step.
    pub selector_k: usize,
    /// Extract size: candidates kept by similarity to the teacher summary.
    pub extract_top: usize,
    /// Scoring context template (`{summary}` / `{query}`).
    pub score_template: String,
    /// When false, reproduce the pseudocode-literal role split: the student
    /// generates stage-1 candidates and the teacher stage-2 candidates.
    pub teacher_generates_both_stages: bool,
    /// Swap generator and scorer roles globally (ablation).
    pub swap_roles: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            selector_k: 10,
            extract_top: 5,
            score_template: crate::lm::DEFAULT_SCORE_TEMPLATE.to_string(),
            teacher_generates_both_stages: true,
            swap_roles: false,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.selector_k == 0 || self.extract_top == 0 {
            return Err(Error::Config(
                "selector_k and extract_top must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The two named perturbation policies: `pi_mid` feeds the upstream
/// selector and midstream distillation calls (and is what stage-2 records
/// store); `pi_down` is reserved for the downstream trainer's input view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicies {
    pub pi_mid: AugmentationPolicy,
    pub pi_down: AugmentationPolicy,
}

impl Default for StagePolicies {
    fn default() -> Self {
        StagePolicies {
            pi_mid: AugmentationPolicy::identity(),
            pi_down: AugmentationPolicy::identity(),
        }
    }
}

/// Backends the builder draws on.
pub struct DistillBackends<'a> {
    pub teacher: &'a LmBackend,
    pub student: &'a LmBackend,
    /// Encoder + adapter the selector ranks with.
    pub selector_encoder: &'a EncoderBackend,
    pub adapter: &'a AdapterMatrix,
    /// Encoder for extract-vs-teacher-summary similarity (the consistency
    /// encoder by default).
    pub similarity_encoder: &'a EncoderBackend,
}

/// Generate one candidate per template with `generator`, score each with
/// `scorer` on the `[candidate; query]` context, and return the best
/// candidate with its score. Ties keep the lowest template index;
/// individual generation failures are skipped unless all fail.
pub fn best_teacher_summary(
    generator: &LmBackend,
    scorer: &LmBackend,
    templates: &PromptTemplateSet,
    query: &str,
    docs: &[String],
    golds: &[String],
    task: Task,
    score_template: &str,
) -> Result<(String, f64)> {
    if templates.is_empty() {
        return Err(Error::Config("template set must not be empty".into()));
    }
    let mut best: Option<(f64, String)> = None;
    let mut last_err = None;
    for i in 0..templates.len() {
        let prompt = templates.render(i, query, docs);
        let candidate = match generator.generate(&prompt) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("teacher generation failed for template {i}: {e}");
                last_err = Some(e);
                continue;
            }
        };
        let context = compose_context(score_template, Some(&candidate), query);
        let score = scorer.score_candidate(task, golds, &context)?;
        if best.as_ref().map(|(b, _)| score > *b).unwrap_or(true) {
            best = Some((score, candidate));
        }
    }
    match best {
        Some((score, candidate)) => Ok((candidate, score)),
        None => Err(last_err.unwrap_or_else(|| {
            Error::InvalidInput("no teacher candidate produced".into())
        })),
    }
}

/// From the selector's candidate sentences for `(query, docs)`, keep the
/// `extract_top` with the highest encoder inner product to the teacher
/// summary, joined in document order. Fewer candidates than the cap: all
/// are kept.
pub fn selector_extract(
    backends: &DistillBackends<'_>,
    query: &str,
    docs: &[String],
    teacher_summary: &str,
    cfg: &DistillConfig,
    segmenter: &Segmenter,
) -> Result<String> {
    let candidates = select_sentences(
        backends.selector_encoder,
        backends.adapter,
        query,
        docs,
        cfg.selector_k,
        segmenter,
    )?;
    let summary_emb = backends.similarity_encoder.embed(teacher_summary)?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
    for (pos, sentence) in candidates.iter().enumerate() {
        let emb = backends.similarity_encoder.embed(&sentence.text)?;
        scored.push((pos, inner_product(&summary_emb, &emb)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut picked: Vec<usize> = scored
        .iter()
        .take(cfg.extract_top)
        .map(|&(pos, _)| pos)
        .collect();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|pos| candidates[pos].text.as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

fn stage_roles<'a>(
    backends: &DistillBackends<'a>,
    cfg: &DistillConfig,
    stage: u8,
) -> (&'a LmBackend, &'a LmBackend) {
    // Default: the teacher proposes, the student judges, in both stages.
    // The pseudocode-literal split has the student propose in stage 1.
    let teacher_proposes = cfg.teacher_generates_both_stages || stage == 2;
    if cfg.swap_roles {
        let generator = if teacher_proposes {
            backends.student
        } else {
            backends.teacher
        };
        (generator, backends.teacher)
    } else {
        let generator = if teacher_proposes {
            backends.teacher
        } else {
            backends.student
        };
        (generator, backends.student)
    }
}

fn build_stage_record(
    stage: u8,
    query: &str,
    docs: &[String],
    golds: &[String],
    augmented: bool,
    backends: &DistillBackends<'_>,
    templates: &PromptTemplateSet,
    cfg: &DistillConfig,
    segmenter: &Segmenter,
    task: Task,
) -> Result<DistilledRecord> {
    let (generator, scorer) = stage_roles(backends, cfg, stage);
    let (summary, sc) = best_teacher_summary(
        generator,
        scorer,
        templates,
        query,
        docs,
        golds,
        task,
        &cfg.score_template,
    )?;
    let no_context_score = scorer.score_candidate(
        task,
        golds,
        &compose_context(&cfg.score_template, None, query),
    )?;
    let extract = selector_extract(backends, query, docs, &summary, cfg, segmenter)?;

    let (target, teacher_summary) = if sc < no_context_score {
        // The teacher adds nothing over the bare query: keep the extract
        // alone and discard the summary.
        (extract.clone(), None)
    } else {
        (format!("{extract} {summary}"), Some(summary))
    };

    Ok(DistilledRecord {
        stage,
        query: query.to_string(),
        docs: docs.to_vec(),
        target,
        selector_extract: extract,
        teacher_summary,
        augmented,
    })
}

/// Build the stage-1 (clean) and stage-2 (perturbed) records for one
/// example. Stage 2 perturbs the query and every doc with `pi_mid` before
/// any teacher or selector call; the perturbed inputs are what the record
/// stores. `augmented` reflects whether perturbation actually changed the
/// inputs. `paraphraser` serves the paraphrase/compose policy kinds.
#[allow(clippy::too_many_arguments)]
pub fn build_distill_records(
    example: &TrainingExample,
    backends: &DistillBackends<'_>,
    templates: &PromptTemplateSet,
    policies: &StagePolicies,
    paraphraser: &dyn Paraphraser,
    cfg: &DistillConfig,
    segmenter: &Segmenter,
    task: Task,
) -> Result<(DistilledRecord, DistilledRecord)> {
    cfg.validate()?;
    let docs = example.docs.clone().ok_or_else(|| {
        Error::InvalidInput(format!("example {} has no inline docs", example.id))
    })?;

    let stage1 = build_stage_record(
        1,
        &example.query,
        &docs,
        &example.answers,
        false,
        backends,
        templates,
        cfg,
        segmenter,
        task,
    )?;

    let (perturbed_query, perturbed_docs) = perturb_inputs(
        &example.id,
        &example.query,
        &docs,
        &policies.pi_mid,
        paraphraser,
        segmenter,
    );
    let augmented = perturbed_query != example.query || perturbed_docs != docs;
    let stage2 = build_stage_record(
        2,
        &perturbed_query,
        &perturbed_docs,
        &example.answers,
        augmented,
        backends,
        templates,
        cfg,
        segmenter,
        task,
    )?;

    Ok((stage1, stage2))
}

/// Apply a policy to the query and each doc under per-target derived RNG
/// streams, so the outcome is independent of processing order.
pub fn perturb_inputs(
    example_id: &str,
    query: &str,
    docs: &[String],
    policy: &AugmentationPolicy,
    paraphraser: &dyn Paraphraser,
    segmenter: &Segmenter,
) -> (String, Vec<String>) {
    use rand::SeedableRng;
    let example_seed = derive_seed(policy.seed, example_id);
    let stream =
        |label: &str| rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(example_seed, label));
    let perturbed_query = crate::augment::perturb_document(
        query,
        policy,
        paraphraser,
        &mut stream("query"),
        segmenter,
    );
    let perturbed_docs = docs
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            crate::augment::perturb_document(
                doc,
                policy,
                paraphraser,
                &mut stream(&format!("doc:{i}")),
                segmenter,
            )
        })
        .collect();
    (perturbed_query, perturbed_docs)
}

/// Dataset-level build: per-example failures are logged and skipped;
/// output order follows input order; `|T1| == |T2|`.
#[allow(clippy::too_many_arguments)]
pub fn build_distill_dataset(
    examples: &[TrainingExample],
    backends: &DistillBackends<'_>,
    templates: &PromptTemplateSet,
    policies: &StagePolicies,
    paraphraser: &dyn Paraphraser,
    cfg: &DistillConfig,
    segmenter: &Segmenter,
    task: Task,
) -> (Vec<DistilledRecord>, Vec<DistilledRecord>, BTreeMap<String, usize>) {
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    let mut skips: BTreeMap<String, usize> = BTreeMap::new();
    for example in examples {
        match build_distill_records(
            example,
            backends,
            templates,
            policies,
            paraphraser,
            cfg,
            segmenter,
            task,
        ) {
            Ok((stage1, stage2)) => {
                t1.push(stage1);
                t2.push(stage2);
            }
            Err(e) => {
                log::warn!("distill build skipped example {}: {e}", example.id);
                *skips.entry(e.to_string()).or_insert(0) += 1;
            }
        }
    }
    (t1, t2, skips)
}

/// Seeded subsample for the summary-generation budget: exactly
/// `ceil(fraction * n)` examples, input order preserved.
pub fn sample_examples(
    examples: &[TrainingExample],
    fraction: f64,
    seed: u64,
) -> Result<Vec<TrainingExample>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "sample fraction must be in [0,1], got {fraction}"
        )));
    }
    use rand::SeedableRng;
    let m = crate::augment::sample_size(fraction, examples.len());
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let picked = crate::augment::sample_indices(examples.len(), m, &mut rng);
    Ok(picked.into_iter().map(|i| examples[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::IdentityParaphraser;
    use crate::lm::MockScript;

    #[test]
    fn template_validation() {
        assert!(PromptTemplateSet::new(vec![]).is_err());
        assert!(PromptTemplateSet::new(vec!["only {query}".into()]).is_err());
        assert!(PromptTemplateSet::new(vec!["{query} and {docs}".into()]).is_ok());
        assert_eq!(PromptTemplateSet::default().len(), 3);
    }

    fn two_template_set() -> PromptTemplateSet {
        PromptTemplateSet::new(vec![
            "T1 q={query} d={docs}".to_string(),
            "T2 d={docs} q={query}".to_string(),
        ])
        .unwrap()
    }

    #[test]
    fn best_summary_argmax_over_templates() {
        let templates = two_template_set();
        let docs = vec!["doc text".to_string()];
        let golds = vec!["gold".to_string()];
        let teacher = LmBackend::mock(
            "teacher",
            MockScript::default()
                .with_generation("T1 q=q d=doc text", "candidate one")
                .with_generation("T2 d=doc text q=q", "candidate two"),
        );
        let student_script = MockScript::default()
            .with_logprob("candidate one\n\nq", "gold", -5.0)
            .unwrap()
            .with_logprob("candidate two\n\nq", "gold", -2.0)
            .unwrap();
        let student = LmBackend::mock("student", student_script);
        let (summary, sc) = best_teacher_summary(
            &teacher,
            &student,
            &templates,
            "q",
            &docs,
            &golds,
            Task::Lm,
            crate::lm::DEFAULT_SCORE_TEMPLATE,
        )
        .unwrap();
        assert_eq!(summary, "candidate two");
        assert_eq!(sc, -2.0);
    }

    #[test]
    fn default_templates_make_one_teacher_call_each() {
        use crate::lm::{EndpointKind, LmParams};
        use crate::net::testing::{fast_retry, FakeTransport};
        use crate::net::RemoteClient;
        use std::sync::Arc;
        let templates = PromptTemplateSet::default();
        let transport = Arc::new(FakeTransport::new(vec![
            (200, r#"{"choices":[{"text":"s1"}]}"#.into()),
            (200, r#"{"choices":[{"text":"s2"}]}"#.into()),
            (200, r#"{"choices":[{"text":"s3"}]}"#.into()),
        ]));
        let teacher = LmBackend::Remote {
            identity: "t".into(),
            params: LmParams::default(),
            endpoint: EndpointKind::Completions,
            client: RemoteClient::new("http://fake", None, transport.clone(), None, 1, fast_retry()),
        };
        let student = LmBackend::mock("s", MockScript::default());
        best_teacher_summary(
            &teacher,
            &student,
            &templates,
            "q",
            &["doc".to_string()],
            &["gold".to_string()],
            Task::Lm,
            crate::lm::DEFAULT_SCORE_TEMPLATE,
        )
        .unwrap();
        assert_eq!(templates.len(), 3);
        assert_eq!(transport.call_count(), 3);
    }

    #[test]
    fn single_template_returns_its_candidate() {
        let templates =
            PromptTemplateSet::new(vec!["only {query} {docs}".to_string()]).unwrap();
        let teacher = LmBackend::mock(
            "teacher",
            MockScript::default().with_generation("only q d", "the summary"),
        );
        let student = LmBackend::mock("student", MockScript::default());
        let (summary, _) = best_teacher_summary(
            &teacher,
            &student,
            &templates,
            "q",
            &["d".to_string()],
            &["gold".to_string()],
            Task::Lm,
            crate::lm::DEFAULT_SCORE_TEMPLATE,
        )
        .unwrap();
        assert_eq!(summary, "the summary");
    }

    fn test_backends<'a>(
        teacher: &'a LmBackend,
        student: &'a LmBackend,
        encoder: &'a EncoderBackend,
        adapter: &'a AdapterMatrix,
    ) -> DistillBackends<'a> {
        DistillBackends {
            teacher,
            student,
            selector_encoder: encoder,
            adapter,
            similarity_encoder: encoder,
        }
    }

    #[test]
    fn extract_saturates_below_cap() {
        let teacher = LmBackend::mock("t", MockScript::default());
        let student = LmBackend::mock("s", MockScript::default());
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let docs = vec!["Alpha one. Beta two. Gamma three.".to_string()];
        let out = selector_extract(
            &backends,
            "q",
            &docs,
            "some teacher summary",
            &DistillConfig::default(),
            &Segmenter::default(),
        )
        .unwrap();
        assert_eq!(out, "Alpha one. Beta two. Gamma three.");
    }

    #[test]
    fn extract_matches_bruteforce_top_ranking() {
        let teacher = LmBackend::mock("t", MockScript::default());
        let student = LmBackend::mock("s", MockScript::default());
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let sentences = [
            "Copper melts first.",
            "Iron holds longer.",
            "Tin bends early.",
            "Lead stays cold.",
            "Zinc rings loud.",
            "Gold never rusts.",
            "Silver tarnishes fast.",
        ];
        let docs = vec![sentences.join(" ")];
        let summary = "which metal resists rust";
        let mut cfg = DistillConfig::default();
        cfg.extract_top = 3;
        let seg = Segmenter::default();
        let out = selector_extract(&backends, "q", &docs, summary, &cfg, &seg).unwrap();

        // Brute force: rank the same candidate set by inner product.
        let candidates = select_sentences(&encoder, &adapter, "q", &docs, cfg.selector_k, &seg)
            .unwrap();
        let s_emb = encoder.embed(summary).unwrap();
        let mut scored: Vec<(usize, f64)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    i,
                    inner_product(&s_emb, &encoder.embed(&c.text).unwrap()).unwrap(),
                )
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut keep: Vec<usize> = scored.iter().take(3).map(|&(i, _)| i).collect();
        keep.sort_unstable();
        let expected = keep
            .into_iter()
            .map(|i| candidates[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        assert_eq!(out, expected);
    }

    #[test]
    fn extract_ranks_exact_summary_match_first() {
        let teacher = LmBackend::mock("t", MockScript::default());
        let student = LmBackend::mock("s", MockScript::default());
        let encoder = EncoderBackend::deterministic_test("enc", 16);
        let adapter = AdapterMatrix::identity(16);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let docs =
            vec!["Totally unrelated filler. The exact answer sentence. More filler here.".to_string()];
        let summary = "The exact answer sentence.";
        let mut cfg = DistillConfig::default();
        cfg.extract_top = 1;
        let out = selector_extract(
            &backends,
            "q",
            &docs,
            summary,
            &cfg,
            &Segmenter::default(),
        )
        .unwrap();
        // A sentence identical to the summary has the summary's own
        // embedding, hence maximal self inner product among hash vectors.
        assert_eq!(out, "The exact answer sentence.");
    }

    fn scripted_pipeline(
        no_context_lp: f64,
    ) -> (LmBackend, LmBackend, PromptTemplateSet, Vec<String>, String) {
        let query = "what is the key?".to_string();
        let docs = vec!["The key is red. It opens a door.".to_string()];
        let templates =
            PromptTemplateSet::new(vec!["Q: {query} D: {docs} S:".to_string()]).unwrap();
        let teacher = LmBackend::mock(
            "teacher",
            MockScript::default().with_generation(
                "Q: what is the key? D: The key is red. It opens a door. S:",
                "A red key.",
            ),
        );
        let student_script = MockScript::default()
            .with_logprob("A red key.\n\nwhat is the key?", "red", -1.0)
            .unwrap()
            .with_logprob("what is the key?", "red", no_context_lp)
            .unwrap();
        let student = LmBackend::mock("student", student_script);
        (teacher, student, templates, docs, query)
    }

    #[test]
    fn teacher_helps_branch_concatenates() {
        let (teacher, student, templates, docs, query) = scripted_pipeline(-3.0);
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let example = TrainingExample::new("e", query, vec!["red".into()]).with_docs(docs);
        let (s1, s2) = build_distill_records(
            &example,
            &backends,
            &templates,
            &StagePolicies::default(),
            &IdentityParaphraser,
            &DistillConfig::default(),
            &Segmenter::default(),
            Task::Lm,
        )
        .unwrap();
        assert_eq!(s1.teacher_summary.as_deref(), Some("A red key."));
        assert_eq!(
            s1.target,
            "The key is red. It opens a door. A red key."
        );
        assert_eq!(s1.stage, 1);
        // Identity policies: stage 2 only differs in the stage tag.
        assert_eq!(s2.stage, 2);
        assert!(!s2.augmented);
        assert_eq!(s1.target, s2.target);
        assert_eq!(s1.query, s2.query);
        assert_eq!(s1.docs, s2.docs);
    }

    #[test]
    fn teacher_fails_branch_keeps_extract_only() {
        let (teacher, student, templates, docs, query) = scripted_pipeline(-0.5);
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let example = TrainingExample::new("e", query, vec!["red".into()]).with_docs(docs);
        let (s1, _) = build_distill_records(
            &example,
            &backends,
            &templates,
            &StagePolicies::default(),
            &IdentityParaphraser,
            &DistillConfig::default(),
            &Segmenter::default(),
            Task::Lm,
        )
        .unwrap();
        assert!(s1.teacher_summary.is_none());
        assert_eq!(s1.target, s1.selector_extract);
        assert_eq!(s1.target, "The key is red. It opens a door.");
    }

    #[test]
    fn record_counts_match_non_skipped() {
        let (teacher, student, templates, docs, query) = scripted_pipeline(-3.0);
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let good = TrainingExample::new("good", query, vec!["red".into()]).with_docs(docs);
        let bad = TrainingExample::new("bad", "q2", vec!["red".into()]); // no docs
        let (t1, t2, skips) = build_distill_dataset(
            &[good, bad],
            &backends,
            &templates,
            &StagePolicies::default(),
            &IdentityParaphraser,
            &DistillConfig::default(),
            &Segmenter::default(),
            Task::Lm,
        );
        assert_eq!(t1.len(), 1);
        assert_eq!(t2.len(), 1);
        assert_eq!(skips.values().sum::<usize>(), 1);
    }

    #[test]
    fn build_is_byte_reproducible() {
        let (teacher, student, templates, docs, query) = scripted_pipeline(-3.0);
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let example = TrainingExample::new("e", query, vec!["red".into()]).with_docs(docs);
        let run = || {
            let (t1, t2, _) = build_distill_dataset(
                std::slice::from_ref(&example),
                &backends,
                &templates,
                &StagePolicies::default(),
                &IdentityParaphraser,
                &DistillConfig::default(),
                &Segmenter::default(),
                Task::Lm,
            );
            serde_json::to_string(&(t1, t2)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn targets_drawn_from_docs_and_summary_only() {
        let (teacher, student, templates, docs, query) = scripted_pipeline(-3.0);
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let backends = test_backends(&teacher, &student, &encoder, &adapter);
        let example =
            TrainingExample::new("e", query, vec!["red".into()]).with_docs(docs.clone());
        let (s1, _) = build_distill_records(
            &example,
            &backends,
            &templates,
            &StagePolicies::default(),
            &IdentityParaphraser,
            &DistillConfig::default(),
            &Segmenter::default(),
            Task::Lm,
        )
        .unwrap();
        let seg = Segmenter::default();
        let doc_sentences: Vec<String> = docs
            .iter()
            .flat_map(|d| seg.segment(d))
            .map(|s| s.text)
            .collect();
        let mut remainder = s1.target.clone();
        for sentence in &doc_sentences {
            remainder = remainder.replace(sentence.as_str(), "");
        }
        if let Some(summary) = &s1.teacher_summary {
            remainder = remainder.replace(summary.as_str(), "");
        }
        assert!(remainder.trim().is_empty(), "fabricated text: {remainder:?}");
    }

    #[test]
    fn distill_jsonl_field_shape() {
        let record = DistilledRecord {
            stage: 1,
            query: "q".into(),
            docs: vec!["d".into()],
            target: "t".into(),
            selector_extract: "e".into(),
            teacher_summary: None,
            augmented: false,
        };
        assert_eq!(
            serde_json::to_string(&record).unwrap(),
            r#"{"stage":1,"query":"q","docs":["d"],"target":"t","selector_extract":"e","teacher_summary":null,"augmented":false}"#
        );
    }
}
