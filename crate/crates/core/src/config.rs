//! Pipeline configuration: one TOML file with nested blocks per module,
//! validated before any work starts, plus backend construction and the
//! run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{load_synonym_table, AugmentationPolicy, PolicyKind};
use crate::cache::DiskCache;
use crate::consistency::{ConsistencyNorm, ConsistencyTrainConfig, RampConfig};
use crate::contrastive::ContrastiveBuildConfig;
use crate::distill::{DistillConfig, PromptTemplateSet, StagePolicies};
use crate::embedding::EncoderBackend;
use crate::error::{Error, Result};
use crate::lm::{EndpointKind, LmBackend, LmParams, MockScript, Task};
use crate::net::{HttpTransport, RemoteClient, RetryPolicy, API_KEY_ENV};
use crate::retrieval::Bm25Params;
use crate::selector::SelectorTrainConfig;
use crate::seeds::derive_seed;
use crate::textkit::Segmenter;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default = "default_corpus")]
    pub corpus: PathBuf,
    #[serde(default = "default_train")]
    pub train: PathBuf,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Optional abbreviation list (one per line) for the segmenter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abbreviations: Option<PathBuf>,
}

fn default_corpus() -> PathBuf {
    "corpus.jsonl".into()
}
fn default_train() -> PathBuf {
    "train.jsonl".into()
}
fn default_cache_dir() -> PathBuf {
    ".c2l-cache".into()
}
fn default_output_dir() -> PathBuf {
    "out".into()
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: default_corpus(),
            train: default_train(),
            cache_dir: default_cache_dir(),
            output_dir: default_output_dir(),
            abbreviations: None,
        }
    }
}

/// One encoder backend block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// "deterministic-test" or "remote".
    pub kind: String,
    pub identity: String,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: "deterministic-test".into(),
            identity: "test-encoder".into(),
            dimension: 16,
            endpoint: None,
        }
    }
}

/// One LM backend block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    /// "mock" or "remote".
    pub kind: String,
    pub identity: String,
    /// Mock script path (mock kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// "completions" (default) or "chat_completions".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_kind: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_top_p() -> f64 {
    1.0
}
fn default_max_tokens() -> u32 {
    256
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            kind: "mock".into(),
            identity: "mock-lm".into(),
            script: None,
            endpoint: None,
            endpoint_kind: None,
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_tokens: default_max_tokens(),
        }
    }
}

/// BM25 block, including ingest-time chunking.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    /// Word-token budget per indexed chunk.
    pub chunk_size: usize,
}

impl Default for Bm25Config {
    fn default() -> Self {
        Bm25Config {
            k1: 1.2,
            b: 0.75,
            chunk_size: 100,
        }
    }
}

/// Augmentation policy block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentBlock {
    pub kind: String,
    pub synonym_table: Option<PathBuf>,
    pub insert_delete_rate: f64,
    pub replace_rate: f64,
    pub sentence_fraction: f64,
}

impl Default for AugmentBlock {
    fn default() -> Self {
        AugmentBlock {
            kind: "token".into(),
            synonym_table: None,
            insert_delete_rate: 0.0,
            replace_rate: 0.0,
            sentence_fraction: 0.30,
        }
    }
}

/// Distillation block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillBlock {
    pub selector_k: usize,
    pub extract_top: usize,
    pub templates: Option<Vec<String>>,
    pub teacher_generates_both_stages: bool,
    pub swap_roles: bool,
    /// Which encoder ranks extract candidates against the teacher summary:
    /// "consistency" (default) or "selector".
    pub similarity_encoder: String,
}

impl Default for DistillBlock {
    fn default() -> Self {
        DistillBlock {
            selector_k: 10,
            extract_top: 5,
            templates: None,
            teacher_generates_both_stages: true,
            swap_roles: false,
            similarity_encoder: "consistency".into(),
        }
    }
}

/// Consistency-training block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsistencyBlock {
    pub epochs: usize,
    pub stage1_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda1_max: f64,
    pub lambda2_max: f64,
    /// "squared_l2" (default) or "l2".
    pub norm: String,
    /// Perturb the generator's stage-2 query view with pi_down.
    pub use_downstream_policy: bool,
}

impl Default for ConsistencyBlock {
    fn default() -> Self {
        ConsistencyBlock {
            epochs: 6,
            stage1_epochs: 3,
            batch_size: 32,
            lr: 0.05,
            lambda1_max: 1.0,
            lambda2_max: 1.0,
            norm: "squared_l2".into(),
            use_downstream_policy: false,
        }
    }
}

/// Evaluation block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    /// "lm" or "qa".
    pub task: String,
    /// Selector summary size.
    pub k: usize,
    pub score_template: String,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            task: "qa".into(),
            k: 5,
            score_template: crate::lm::DEFAULT_SCORE_TEMPLATE.into(),
        }
    }
}

/// Remote transport block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteBlock {
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for RemoteBlock {
    fn default() -> Self {
        RemoteBlock {
            max_in_flight: 4,
            timeout_secs: 60,
            max_retries: 3,
        }
    }
}

/// The whole pipeline configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub encoders: EncodersConfig,
    pub lms: LmsConfig,
    pub bm25: Bm25Config,
    pub contrastive: ContrastiveBuildConfig,
    pub selector_train: SelectorTrainConfig,
    pub augment: AugmentConfig,
    pub distill: DistillBlock,
    pub consistency_train: ConsistencyBlock,
    pub eval: EvalBlock,
    pub remote: RemoteBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodersConfig {
    pub selector: EncoderConfig,
    pub consistency: EncoderConfig,
}

impl Default for EncodersConfig {
    fn default() -> Self {
        EncodersConfig {
            selector: EncoderConfig::default(),
            consistency: EncoderConfig {
                identity: "test-consistency-encoder".into(),
                ..EncoderConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmsConfig {
    pub student: LmConfig,
    pub teacher: LmConfig,
}

impl Default for LmsConfig {
    fn default() -> Self {
        LmsConfig {
            student: LmConfig {
                identity: "mock-student".into(),
                ..LmConfig::default()
            },
            teacher: LmConfig {
                identity: "mock-teacher".into(),
                ..LmConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub pi_mid: AugmentBlock,
    pub pi_down: AugmentBlock,
}

impl PipelineConfig {
    /// Parse a TOML config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Range-check every numeric block before any work starts.
    pub fn validate(&self) -> Result<()> {
        Bm25Params {
            k1: self.bm25.k1,
            b: self.bm25.b,
        }
        .validate()?;
        if self.bm25.chunk_size == 0 {
            return Err(Error::Config("bm25.chunk_size must be >= 1".into()));
        }
        self.contrastive.validate()?;
        self.selector_train.validate()?;
        for (name, block) in [("pi_mid", &self.augment.pi_mid), ("pi_down", &self.augment.pi_down)]
        {
            parse_policy_kind(&block.kind)
                .map_err(|e| Error::Config(format!("augment.{name}: {e}")))?;
            for (field, value) in [
                ("insert_delete_rate", block.insert_delete_rate),
                ("replace_rate", block.replace_rate),
                ("sentence_fraction", block.sentence_fraction),
            ] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Config(format!(
                        "augment.{name}.{field} must be in [0,1], got {value}"
                    )));
                }
            }
        }
        if self.distill.selector_k == 0 || self.distill.extract_top == 0 {
            return Err(Error::Config(
                "distill.selector_k and distill.extract_top must be >= 1".into(),
            ));
        }
        if !matches!(self.distill.similarity_encoder.as_str(), "consistency" | "selector") {
            return Err(Error::Config(format!(
                "distill.similarity_encoder must be \"consistency\" or \"selector\", got {:?}",
                self.distill.similarity_encoder
            )));
        }
        if let Some(templates) = &self.distill.templates {
            PromptTemplateSet::new(templates.clone())?;
        }
        let c = &self.consistency_train;
        if c.stage1_epochs > c.epochs {
            return Err(Error::Config(format!(
                "consistency_train.stage1_epochs {} exceeds epochs {}",
                c.stage1_epochs, c.epochs
            )));
        }
        if !(c.lr > 0.0) {
            return Err(Error::Config("consistency_train.lr must be > 0".into()));
        }
        if c.batch_size == 0 {
            return Err(Error::Config("consistency_train.batch_size must be >= 1".into()));
        }
        if c.lambda1_max < 0.0 || c.lambda2_max < 0.0 {
            return Err(Error::Config("lambda maxima must be >= 0".into()));
        }
        parse_norm(&c.norm)?;
        parse_task(&self.eval.task)?;
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be >= 1".into()));
        }
        for (name, lm) in [("student", &self.lms.student), ("teacher", &self.lms.teacher)] {
            LmParams {
                temperature: lm.temperature,
                top_p: lm.top_p,
                max_tokens: lm.max_tokens,
            }
            .validate()
            .map_err(|e| Error::Config(format!("lms.{name}: {e}")))?;
            if !matches!(lm.kind.as_str(), "mock" | "remote") {
                return Err(Error::Config(format!(
                    "lms.{name}.kind must be \"mock\" or \"remote\", got {:?}",
                    lm.kind
                )));
            }
        }
        for (name, enc) in [
            ("selector", &self.encoders.selector),
            ("consistency", &self.encoders.consistency),
        ] {
            if enc.dimension == 0 {
                return Err(Error::Config(format!("encoders.{name}.dimension must be >= 1")));
            }
            if !matches!(enc.kind.as_str(), "deterministic-test" | "remote") {
                return Err(Error::Config(format!(
                    "encoders.{name}.kind must be \"deterministic-test\" or \"remote\", got {:?}",
                    enc.kind
                )));
            }
        }
        if self.remote.max_in_flight == 0 {
            return Err(Error::Config("remote.max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialized config; keys in struct order,
    /// so identical configs hash identically.
    pub fn canonical_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Named seed substream for one module.
    pub fn module_seed(&self, module: &str) -> u64 {
        derive_seed(self.seed, module)
    }

    pub fn segmenter(&self) -> Result<Segmenter> {
        match &self.paths.abbreviations {
            Some(path) => Segmenter::from_abbreviation_file(path),
            None => Ok(Segmenter::default()),
        }
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.bm25.k1,
            b: self.bm25.b,
        }
    }

    pub fn ramp(&self) -> RampConfig {
        RampConfig {
            stage1_epochs: self.consistency_train.stage1_epochs,
            total_epochs: self.consistency_train.epochs,
            lambda1_max: self.consistency_train.lambda1_max,
            lambda2_max: self.consistency_train.lambda2_max,
        }
    }

    pub fn consistency_train_config(&self) -> Result<ConsistencyTrainConfig> {
        Ok(ConsistencyTrainConfig {
            ramp: self.ramp(),
            lr: self.consistency_train.lr,
            batch_size: self.consistency_train.batch_size,
            seed: self.module_seed("consistency_trainer"),
            norm: parse_norm(&self.consistency_train.norm)?,
            feature_adapter: None,
            downstream_policy: if self.consistency_train.use_downstream_policy {
                Some(self.policy(&self.augment.pi_down, "pi_down")?)
            } else {
                None
            },
        })
    }

    pub fn selector_train_config(&self) -> SelectorTrainConfig {
        SelectorTrainConfig {
            seed: self.module_seed("selector"),
            ..self.selector_train
        }
    }

    pub fn contrastive_config(&self) -> ContrastiveBuildConfig {
        self.contrastive
    }

    pub fn distill_config(&self) -> DistillConfig {
        DistillConfig {
            selector_k: self.distill.selector_k,
            extract_top: self.distill.extract_top,
            score_template: self.eval.score_template.clone(),
            teacher_generates_both_stages: self.distill.teacher_generates_both_stages,
            swap_roles: self.distill.swap_roles,
        }
    }

    pub fn templates(&self) -> Result<PromptTemplateSet> {
        match &self.distill.templates {
            Some(t) => PromptTemplateSet::new(t.clone()),
            None => Ok(PromptTemplateSet::default()),
        }
    }

    pub fn task(&self) -> Result<Task> {
        parse_task(&self.eval.task)
    }

    fn policy(&self, block: &AugmentBlock, name: &str) -> Result<AugmentationPolicy> {
        let synonym_table = match &block.synonym_table {
            Some(path) => load_synonym_table(path)?,
            None => BTreeMap::new(),
        };
        let policy = AugmentationPolicy {
            kind: parse_policy_kind(&block.kind)?,
            synonym_table,
            insert_delete_rate: block.insert_delete_rate,
            replace_rate: block.replace_rate,
            sentence_fraction: block.sentence_fraction,
            seed: self.module_seed(&format!("augment.{name}")),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn stage_policies(&self) -> Result<StagePolicies> {
        Ok(StagePolicies {
            pi_mid: self.policy(&self.augment.pi_mid, "pi_mid")?,
            pi_down: self.policy(&self.augment.pi_down, "pi_down")?,
        })
    }

    fn remote_client(&self, endpoint: Option<&str>, cache: Option<Arc<DiskCache>>) -> Result<RemoteClient> {
        let base = RemoteClient::base_url_from_env(endpoint)?;
        let transport = HttpTransport::new(Duration::from_secs(self.remote.timeout_secs))?;
        Ok(RemoteClient::new(
            base,
            std::env::var(API_KEY_ENV).ok(),
            Arc::new(transport),
            cache,
            self.remote.max_in_flight,
            RetryPolicy {
                max_retries: self.remote.max_retries,
                ..RetryPolicy::default()
            },
        ))
    }

    pub fn build_encoder(&self, which: &str) -> Result<EncoderBackend> {
        let cfg = match which {
            "selector" => &self.encoders.selector,
            "consistency" => &self.encoders.consistency,
            other => return Err(Error::Config(format!("unknown encoder block {other:?}"))),
        };
        match cfg.kind.as_str() {
            "deterministic-test" => Ok(EncoderBackend::deterministic_test(
                cfg.identity.clone(),
                cfg.dimension,
            )),
            "remote" => Ok(EncoderBackend::Remote {
                identity: cfg.identity.clone(),
                dimension: cfg.dimension,
                client: self.remote_client(
                    cfg.endpoint.as_deref(),
                    Some(Arc::new(DiskCache::new(&self.paths.cache_dir)?)),
                )?,
            }),
            other => Err(Error::Config(format!("unknown encoder kind {other:?}"))),
        }
    }

    pub fn build_lm(&self, which: &str) -> Result<LmBackend> {
        let cfg = match which {
            "student" => &self.lms.student,
            "teacher" => &self.lms.teacher,
            other => return Err(Error::Config(format!("unknown lm block {other:?}"))),
        };
        let params = LmParams {
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            max_tokens: cfg.max_tokens,
        };
        match cfg.kind.as_str() {
            "mock" => {
                let script = match &cfg.script {
                    Some(path) => MockScript::from_file(path)?,
                    None => MockScript::default(),
                };
                Ok(LmBackend::Mock {
                    identity: cfg.identity.clone(),
                    params,
                    script,
                })
            }
            "remote" => {
                let endpoint_kind = match cfg.endpoint_kind.as_deref() {
                    None | Some("completions") => EndpointKind::Completions,
                    Some("chat_completions") => EndpointKind::ChatCompletions,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown endpoint kind {other:?}")))
                    }
                };
                Ok(LmBackend::Remote {
                    identity: cfg.identity.clone(),
                    params,
                    endpoint: endpoint_kind,
                    client: self.remote_client(
                        cfg.endpoint.as_deref(),
                        Some(Arc::new(DiskCache::new(&self.paths.cache_dir)?)),
                    )?,
                })
            }
            other => Err(Error::Config(format!("unknown lm kind {other:?}"))),
        }
    }
}

fn parse_policy_kind(kind: &str) -> Result<PolicyKind> {
    match kind {
        "token" => Ok(PolicyKind::Token),
        "paraphrase" => Ok(PolicyKind::Paraphrase),
        "compose" => Ok(PolicyKind::Compose),
        other => Err(Error::Config(format!("unknown augmentation kind {other:?}"))),
    }
}

fn parse_norm(norm: &str) -> Result<ConsistencyNorm> {
    match norm {
        "squared_l2" => Ok(ConsistencyNorm::SquaredL2),
        "l2" => Ok(ConsistencyNorm::L2),
        other => Err(Error::Config(format!("unknown consistency norm {other:?}"))),
    }
}

fn parse_task(task: &str) -> Result<Task> {
    match task {
        "lm" => Ok(Task::Lm),
        "qa" => Ok(Task::Qa),
        other => Err(Error::Config(format!("unknown task {other:?}, expected lm or qa"))),
    }
}

/// Run manifest written next to every command's outputs. Deliberately
/// free of wall-clock fields so reruns stay byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, args: &[String], config: &PipelineConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("c2l".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("format".to_string(), "1".to_string());
        Manifest {
            command: command.to_string(),
            args: args.to_vec(),
            config_hash: config.canonical_hash(),
            seed: config.seed,
            versions,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(path, e))
    }
}
