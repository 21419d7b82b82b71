//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use c2l_core::augment::{IdentityParaphraser, LmParaphraser, Paraphraser};
use c2l_core::config::{Manifest, PipelineConfig};
use c2l_core::contrastive::{ContrastiveBuilder, ContrastiveExample};
use c2l_core::data::{load_jsonl, save_jsonl, validate_dataset, TrainingExample};
use c2l_core::distill::{build_distill_dataset, DistillBackends, DistilledRecord};
use c2l_core::embedding::AdapterMatrix;
use c2l_core::evalkit::{
    baseline_compress, render_metrics_tables, run_eval, BaselineAux, BaselineKind, Compressor,
    EvalConfig, EvalInput, FnCompressor, MetricsTable, NoContext,
};
use c2l_core::lm::Task;
use c2l_core::retrieval::{chunk_corpus, Bm25Index, CorpusChunk};
use c2l_core::seeds::derive_seed;
use c2l_core::selector::{compress_to_summary, embed_dataset, train_selector};

use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    std::fs::create_dir_all(&config.paths.output_dir)
        .with_context(|| format!("creating {}", config.paths.output_dir.display()))?;

    let manifest_path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| config.paths.output_dir.join("manifest.json"));
    let (name, args) = describe(&cli.command);
    Manifest::new(&name, &args, &config).save(&manifest_path)?;

    match cli.command {
        Command::Index {
            corpus,
            out,
            chunk_size,
        } => cmd_index(&config, corpus, out, chunk_size),
        Command::Retrieve {
            index,
            train,
            out,
            k,
            inline,
        } => cmd_retrieve(&config, &index, train, &out, k, inline),
        Command::BuildContrastive {
            train,
            out,
            adapter,
        } => cmd_build_contrastive(&config, train, out, adapter),
        Command::TrainSelector {
            triples,
            out,
            report,
        } => cmd_train_selector(&config, &triples, out, report),
        Command::Select {
            query,
            adapter,
            docs_json,
            index,
            retrieve_k,
            k,
        } => cmd_select(&config, &query, adapter, docs_json, index, retrieve_k, k),
        Command::BuildDistill {
            train,
            out,
            adapter,
            sample_fraction,
        } => cmd_build_distill(&config, train, out, adapter, sample_fraction),
        Command::TrainCompressor { distill, out, log } => {
            cmd_train_compressor(&config, &distill, out, log)
        }
        Command::Evaluate {
            train,
            system,
            adapter,
            out_report,
            out_records,
            k,
        } => cmd_evaluate(&config, train, &system, adapter, out_report, out_records, k),
        Command::Gradcheck => cmd_gradcheck(&config),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    if path.exists() {
        Ok(PipelineConfig::load(path)?)
    } else if path == Path::new("c2l.toml") {
        // The default path is allowed to be absent; run on defaults.
        Ok(PipelineConfig::default())
    } else {
        bail!("config file not found: {}", path.display());
    }
}

fn describe(command: &Command) -> (String, Vec<String>) {
    let name = match command {
        Command::Index { .. } => "index",
        Command::Retrieve { .. } => "retrieve",
        Command::BuildContrastive { .. } => "build-contrastive",
        Command::TrainSelector { .. } => "train-selector",
        Command::Select { .. } => "select",
        Command::BuildDistill { .. } => "build-distill",
        Command::TrainCompressor { .. } => "train-compressor",
        Command::Evaluate { .. } => "evaluate",
        Command::Gradcheck => "gradcheck",
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    (name.to_string(), args)
}

fn out_path(config: &PipelineConfig, flag: Option<PathBuf>, default_name: &str) -> PathBuf {
    flag.unwrap_or_else(|| config.paths.output_dir.join(default_name))
}

fn load_train(config: &PipelineConfig, flag: Option<PathBuf>, task: Task) -> Result<Vec<TrainingExample>> {
    let path = flag.unwrap_or_else(|| config.paths.train.clone());
    let examples: Vec<TrainingExample> =
        load_jsonl(&path).with_context(|| format!("loading {}", path.display()))?;
    validate_dataset(&examples, task)?;
    Ok(examples)
}

fn load_adapter(flag: Option<PathBuf>, dim: usize) -> Result<AdapterMatrix> {
    match flag {
        Some(path) => {
            let adapter = AdapterMatrix::load(&path)
                .with_context(|| format!("loading adapter {}", path.display()))?;
            if adapter.d_in != dim {
                bail!(
                    "adapter dimension {} does not match encoder dimension {dim}",
                    adapter.d_in
                );
            }
            Ok(adapter)
        }
        None => Ok(AdapterMatrix::identity(dim)),
    }
}

/// Resolve doc_refs to inline docs against the corpus when needed.
fn resolve_all_docs(
    config: &PipelineConfig,
    examples: Vec<TrainingExample>,
) -> Result<Vec<TrainingExample>> {
    let needs_corpus = examples.iter().any(|e| e.doc_refs.is_some());
    let corpus: BTreeMap<String, CorpusChunk> = if needs_corpus {
        c2l_core::data::load_corpus_map(&config.paths.corpus)
            .with_context(|| format!("loading corpus {}", config.paths.corpus.display()))?
    } else {
        BTreeMap::new()
    };
    examples
        .into_iter()
        .map(|mut e| {
            let docs = e.resolve_docs(&corpus)?;
            e.docs = Some(docs);
            e.doc_refs = None;
            Ok(e)
        })
        .collect()
}

fn cmd_index(
    config: &PipelineConfig,
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    chunk_size: Option<usize>,
) -> Result<()> {
    let corpus_path = corpus.unwrap_or_else(|| config.paths.corpus.clone());
    let chunks: Vec<CorpusChunk> =
        load_jsonl(&corpus_path).with_context(|| format!("loading {}", corpus_path.display()))?;
    let chunked = chunk_corpus(chunks, chunk_size.unwrap_or(config.bm25.chunk_size))?;
    let index = Bm25Index::build(chunked, config.bm25_params())?;
    let out = out_path(config, out, "index.json");
    index.save(&out)?;
    println!("indexed {} chunks -> {}", index.len(), out.display());
    Ok(())
}

fn cmd_retrieve(
    config: &PipelineConfig,
    index_path: &Path,
    train: Option<PathBuf>,
    out: &Path,
    k: usize,
    inline: bool,
) -> Result<()> {
    if k == 0 {
        bail!("k must be >= 1");
    }
    let index = Bm25Index::load(index_path)?;
    let examples = load_train(config, train, Task::Lm)?;
    let mut attached = 0usize;
    let updated: Vec<TrainingExample> = examples
        .into_iter()
        .map(|mut e| {
            if e.docs.is_none() && e.doc_refs.is_none() {
                let top = index.retrieve_top_k(&e.query, k);
                if inline {
                    e.docs = Some(top.iter().map(|(c, _)| c.text.clone()).collect());
                } else {
                    e.doc_refs = Some(top.iter().map(|(c, _)| c.id.clone()).collect());
                }
                attached += 1;
            }
            e
        })
        .collect();
    save_jsonl(out, &updated)?;
    println!(
        "retrieved docs for {attached} of {} examples -> {}",
        updated.len(),
        out.display()
    );
    Ok(())
}

fn cmd_build_contrastive(
    config: &PipelineConfig,
    train: Option<PathBuf>,
    out: Option<PathBuf>,
    adapter: Option<PathBuf>,
) -> Result<()> {
    let task = config.task()?;
    let examples = resolve_all_docs(config, load_train(config, train, task)?)?;
    let encoder = config.build_encoder("selector")?;
    let adapter = load_adapter(adapter, encoder.dimension())?;
    let backend = config.build_lm("student")?;
    let segmenter = config.segmenter()?;
    let builder = ContrastiveBuilder {
        encoder: &encoder,
        adapter: &adapter,
        backend: &backend,
        task,
        segmenter: &segmenter,
        score_template: &config.eval.score_template,
        cfg: config.contrastive_config(),
    };
    let (dataset, report) = builder.build_dataset(&examples);
    let out = out_path(config, out, "triples.jsonl");
    save_jsonl(&out, &dataset)?;
    println!(
        "built {} contrastive examples ({} skipped) -> {}",
        report.built,
        report.total_skipped(),
        out.display()
    );
    for (reason, count) in &report.skipped {
        println!("  skipped {count}: {reason}");
    }
    Ok(())
}

fn cmd_train_selector(
    config: &PipelineConfig,
    triples: &Path,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
) -> Result<()> {
    let dataset: Vec<ContrastiveExample> =
        load_jsonl(triples).with_context(|| format!("loading {}", triples.display()))?;
    if dataset.is_empty() {
        bail!("triples file {} is empty", triples.display());
    }
    let encoder = config.build_encoder("selector")?;
    let embedded = embed_dataset(&encoder, &dataset)?;
    let train_report = train_selector(
        &embedded,
        encoder.dimension(),
        config.contrastive.tau,
        &config.selector_train_config(),
    )?;
    let adapter_out = out_path(config, out, "adapter.json");
    train_report.adapter.save(&adapter_out)?;
    let report_out = out_path(config, report, "train_report.json");
    train_report.save(&report_out)?;
    println!(
        "trained selector over {} examples, {} steps -> {}",
        dataset.len(),
        train_report.steps,
        adapter_out.display()
    );
    if let (Some(first), Some(last)) = (
        train_report.epoch_losses.first(),
        train_report.epoch_losses.last(),
    ) {
        println!("  epoch loss: {first:.6} -> {last:.6}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    config: &PipelineConfig,
    query: &str,
    adapter: Option<PathBuf>,
    docs_json: Option<PathBuf>,
    index: Option<PathBuf>,
    retrieve_k: usize,
    k: Option<usize>,
) -> Result<()> {
    let docs: Vec<String> = match (docs_json, index) {
        (Some(path), None) => {
            let raw = std::fs::read_to_string(&path)
                .with_context(|| format!("loading {}", path.display()))?;
            serde_json::from_str(&raw)
                .with_context(|| format!("{} must be a JSON array of strings", path.display()))?
        }
        (None, Some(index_path)) => {
            let index = Bm25Index::load(&index_path)?;
            index
                .retrieve_top_k(query, retrieve_k)
                .into_iter()
                .map(|(c, _)| c.text.clone())
                .collect()
        }
        (Some(_), Some(_)) => bail!("pass either --docs-json or --index, not both"),
        (None, None) => bail!("pass --docs-json or --index to supply documents"),
    };
    let encoder = config.build_encoder("selector")?;
    let adapter = load_adapter(adapter, encoder.dimension())?;
    let segmenter = config.segmenter()?;
    let summary = compress_to_summary(
        &encoder,
        &adapter,
        query,
        &docs,
        k.unwrap_or(config.eval.k),
        &segmenter,
    )?;
    println!("{summary}");
    Ok(())
}

fn cmd_build_distill(
    config: &PipelineConfig,
    train: Option<PathBuf>,
    out: Option<PathBuf>,
    adapter: Option<PathBuf>,
    sample_fraction: f64,
) -> Result<()> {
    let task = config.task()?;
    let examples = resolve_all_docs(config, load_train(config, train, task)?)?;
    let examples = c2l_core::distill::sample_examples(
        &examples,
        sample_fraction,
        config.module_seed("distill.sample"),
    )?;
    let teacher = config.build_lm("teacher")?;
    let student = config.build_lm("student")?;
    let selector_encoder = config.build_encoder("selector")?;
    let consistency_encoder = config.build_encoder("consistency")?;
    let adapter = load_adapter(adapter, selector_encoder.dimension())?;
    let similarity_encoder = if config.distill.similarity_encoder == "selector" {
        &selector_encoder
    } else {
        &consistency_encoder
    };
    let backends = DistillBackends {
        teacher: &teacher,
        student: &student,
        selector_encoder: &selector_encoder,
        adapter: &adapter,
        similarity_encoder,
    };
    let segmenter = config.segmenter()?;
    // Paraphrase-flavored policies rewrite sentences through the teacher.
    let paraphraser: Box<dyn Paraphraser> = if config.augment.pi_mid.kind == "token" {
        Box::new(IdentityParaphraser)
    } else {
        Box::new(LmParaphraser::new(&teacher))
    };
    let (t1, t2, skips) = build_distill_dataset(
        &examples,
        &backends,
        &config.templates()?,
        &config.stage_policies()?,
        paraphraser.as_ref(),
        &config.distill_config(),
        &segmenter,
        task,
    );
    let mut records = t1;
    records.extend(t2);
    let out = out_path(config, out, "distill.jsonl");
    save_jsonl(&out, &records)?;
    println!(
        "built {} distilled records ({} examples skipped) -> {}",
        records.len(),
        skips.values().sum::<usize>(),
        out.display()
    );
    for (reason, count) in &skips {
        println!("  skipped {count}: {reason}");
    }
    Ok(())
}

fn cmd_train_compressor(
    config: &PipelineConfig,
    distill: &Path,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
) -> Result<()> {
    let records: Vec<DistilledRecord> =
        load_jsonl(distill).with_context(|| format!("loading {}", distill.display()))?;
    let (t1, t2): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.stage == 1);
    let encoder = config.build_encoder("consistency")?;
    let segmenter = config.segmenter()?;
    let outcome = c2l_core::consistency::train_two_stage(
        &t1,
        &t2,
        &encoder,
        &segmenter,
        &config.consistency_train_config()?,
    )?;
    let generator_out = out_path(config, out, "generator.json");
    outcome.generator.save(&generator_out)?;
    let log_out = out_path(config, log, "training_log.jsonl");
    save_jsonl(&log_out, &outcome.step_log)?;
    println!(
        "trained compressor: {} stage-1 / {} stage-2 records -> {}",
        t1.len(),
        t2.len(),
        generator_out.display()
    );
    for (epoch, breakdown) in outcome.epoch_breakdowns.iter().enumerate() {
        println!(
            "  epoch {epoch}: total {:.6} (l_s {:.6}, l_cg {:.6}, l_ce {:.6}, lambda {:.3}/{:.3})",
            breakdown.total,
            breakdown.l_s,
            breakdown.l_cg,
            breakdown.l_ce,
            breakdown.lambda1,
            breakdown.lambda2
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    config: &PipelineConfig,
    train: Option<PathBuf>,
    systems: &str,
    adapter: Option<PathBuf>,
    out_report: Option<PathBuf>,
    out_records: Option<PathBuf>,
    k: Option<usize>,
) -> Result<()> {
    let task = config.task()?;
    let examples = resolve_all_docs(config, load_train(config, train, task)?)?;
    let backend = config.build_lm("student")?;
    let encoder = config.build_encoder("selector")?;
    let adapter = load_adapter(adapter, encoder.dimension())?;
    let segmenter = config.segmenter()?;
    let k = k.unwrap_or(config.eval.k);
    let eval_cfg = EvalConfig {
        score_template: config.eval.score_template.clone(),
    };
    let random_seed = config.module_seed("eval.random");

    let mut tables: Vec<MetricsTable> = Vec::new();
    let mut all_records = Vec::new();
    for name in systems.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let system: Box<dyn Compressor> = match name {
            "none" => Box::new(NoContext),
            "selector" => {
                let encoder = encoder.clone();
                let adapter = adapter.clone();
                let segmenter = segmenter.clone();
                Box::new(FnCompressor::new("selector", move |input: &EvalInput<'_>| {
                    compress_to_summary(&encoder, &adapter, input.query, input.docs, k, &segmenter)
                }))
            }
            other => {
                let kind = parse_baseline(other)?;
                let backend = backend.clone();
                let segmenter = segmenter.clone();
                let template = config.eval.score_template.clone();
                Box::new(FnCompressor::new(other, move |input: &EvalInput<'_>| {
                    let aux = BaselineAux {
                        seed: Some(derive_seed(random_seed, input.id)),
                        backend: Some(&backend),
                        task: Some(task),
                        golds: Some(input.golds),
                        score_template: &template,
                    };
                    baseline_compress(kind, input.query, input.docs, &aux, &segmenter)
                }))
            }
        };
        let (table, records) = run_eval(&examples, system.as_ref(), task, &backend, &eval_cfg)?;
        tables.push(table);
        all_records.extend(records);
    }
    if tables.is_empty() {
        bail!("no systems named in --system");
    }

    let report_out = out_path(config, out_report, "eval_report.json");
    std::fs::write(&report_out, serde_json::to_string_pretty(&tables)?)
        .with_context(|| format!("writing {}", report_out.display()))?;
    let records_out = out_path(config, out_records, "eval_records.jsonl");
    save_jsonl(&records_out, &all_records)?;

    println!("{}", render_metrics_tables(&tables));
    println!("report -> {}", report_out.display());
    Ok(())
}

fn parse_baseline(name: &str) -> Result<BaselineKind> {
    Ok(match name {
        "bow" => BaselineKind::Bow,
        "ne" => BaselineKind::Ne,
        "random" => BaselineKind::Random,
        "upperbound" => BaselineKind::Upperbound,
        "prepend_top1" => BaselineKind::PrependTop1,
        "prepend_top5" => BaselineKind::PrependTop5,
        other => bail!("unknown system {other:?}"),
    })
}

fn cmd_gradcheck(config: &PipelineConfig) -> Result<()> {
    let reports = c2l_core::gradcheck::run_all(config.module_seed("gradcheck"))?;
    let mut all_passed = true;
    for report in &reports {
        println!(
            "{} {}: {} fixtures, {} checks, max rel err {:.3e} (tolerance {:.0e})",
            if report.passed() { "PASS" } else { "FAIL" },
            report.suite,
            report.fixtures,
            report.checks,
            report.max_rel_err,
            report.tolerance
        );
        all_passed &= report.passed();
    }
    if !all_passed {
        bail!("gradient checks failed");
    }
    Ok(())
}
