//! `c2l` — the pipeline driver: index, retrieve, build the contrastive and
//! distilled datasets, train the selector and the compressor, evaluate
//! compression systems, and run the gradient-check suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure. Every run
//! writes a manifest (config hash, seed, versions) next to its outputs.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "c2l", version, about = "Context compression pipeline for retrieval-augmented generation")]
struct Cli {
    /// TOML config file; defaults apply when the default path is absent.
    #[arg(long, global = true, default_value = "c2l.toml")]
    config: PathBuf,

    /// Override the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Manifest path (default: {output_dir}/manifest.json).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the BM25 index over corpus.jsonl.
    Index {
        /// Corpus file (default: paths.corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Index output (default: {output_dir}/index.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Word-token budget per indexed chunk (default: bm25.chunk_size).
        #[arg(long)]
        chunk_size: Option<usize>,
    },
    /// Attach top-K retrieved docs to examples lacking them.
    Retrieve {
        /// Index file produced by `index`.
        #[arg(long)]
        index: PathBuf,
        /// Input examples (default: paths.train).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Docs per example.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Store chunk text inline instead of chunk-id references.
        #[arg(long)]
        inline: bool,
    },
    /// Build the contrastive triples dataset.
    BuildContrastive {
        /// Input examples (default: paths.train).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output triples.jsonl (default: {output_dir}/triples.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Adapter file ranking candidate similarity (default: identity).
        #[arg(long)]
        adapter: Option<PathBuf>,
    },
    /// Train the selector adapter on a triples dataset.
    TrainSelector {
        /// triples.jsonl from build-contrastive.
        #[arg(long)]
        triples: PathBuf,
        /// Adapter output (default: {output_dir}/adapter.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training report output (default: {output_dir}/train_report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compress one query: print the selected-sentence summary.
    Select {
        #[arg(long)]
        query: String,
        /// Trained adapter (default: identity).
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// JSON array of document strings.
        #[arg(long)]
        docs_json: Option<PathBuf>,
        /// Retrieve docs from this index instead.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Docs to retrieve when --index is used.
        #[arg(long, default_value_t = 5)]
        retrieve_k: usize,
        /// Sentences in the summary (default: eval.k).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Build the two-stage distilled training sets.
    BuildDistill {
        /// Input examples (default: paths.train).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output distill.jsonl (default: {output_dir}/distill.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Selector adapter (default: identity).
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// Seeded fraction of examples to distill (summary-generation
        /// budget).
        #[arg(long, default_value_t = 1.0)]
        sample_fraction: f64,
    },
    /// Train the compressor under the two-stage consistency objective.
    TrainCompressor {
        /// distill.jsonl from build-distill.
        #[arg(long)]
        distill: PathBuf,
        /// Generator output (default: {output_dir}/generator.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Step log output (default: {output_dir}/training_log.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate compression systems over a dataset.
    Evaluate {
        /// Input examples (default: paths.train).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Comma-separated systems: none, selector, bow, ne, random,
        /// upperbound, prepend_top1, prepend_top5.
        #[arg(long)]
        system: String,
        /// Selector adapter (default: identity).
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// Report output (default: {output_dir}/eval_report.json).
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Per-record output (default: {output_dir}/eval_records.jsonl).
        #[arg(long)]
        out_records: Option<PathBuf>,
        /// Selector summary size (default: eval.k).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run every finite-difference gradient suite.
    Gradcheck,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}
