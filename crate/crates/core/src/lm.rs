//! Uniform interface to the student and teacher language models:
//! generation, sequence log-probability, and the candidate scoring
//! function, with a deterministic scripted mock for offline runs.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evalkit::exact_match;
use crate::net::RemoteClient;
use crate::textkit::normalize_whitespace;

/// Context template used when scoring a candidate summary against a query:
/// the summary and the query joined by a blank line.
pub const DEFAULT_SCORE_TEMPLATE: &str = "{summary}\n\n{query}";

/// Downstream task flavor; decides how candidates are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Language modeling: score = sequence log-probability of the gold
    /// continuation.
    Lm,
    /// Question answering: score = exact match of a fresh generation
    /// against the gold answers, in {0, 1}.
    Qa,
}

/// Compose the scoring context from an optional summary and the query.
/// With no summary the query stands alone.
pub fn compose_context(template: &str, summary: Option<&str>, query: &str) -> String {
    match summary {
        Some(s) => template.replace("{summary}", s).replace("{query}", query),
        None => query.to_string(),
    }
}

/// Sampling parameters forwarded to remote backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            temperature: 0.7,
            top_p: 1.0,
            max_tokens: 256,
        }
    }
}

impl LmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!(
                "top_p must be in (0,1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// Scripted test double. Keys match after whitespace normalization; all
/// log-probabilities must be <= 0.
#[derive(Debug, Clone, Default)]
pub struct MockScript {
    generations: HashMap<String, String>,
    logprobs: HashMap<(String, String), f64>,
    default_logprob: f64,
}

/// Serialized mock script: `logprobs` is a list because JSON keys cannot
/// be pairs.
#[derive(Debug, Serialize, Deserialize)]
struct MockScriptFile {
    #[serde(default)]
    generations: HashMap<String, String>,
    #[serde(default)]
    logprobs: Vec<MockLogprobEntry>,
    #[serde(default = "default_mock_logprob")]
    default_logprob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MockLogprobEntry {
    context: String,
    target: String,
    logprob: f64,
}

fn default_mock_logprob() -> f64 {
    -10.0
}

impl MockScript {
    pub fn new(default_logprob: f64) -> Result<Self> {
        if default_logprob > 0.0 {
            return Err(Error::InvalidInput(format!(
                "default_logprob must be <= 0, got {default_logprob}"
            )));
        }
        Ok(MockScript {
            default_logprob,
            ..Default::default()
        })
    }

    pub fn with_generation(mut self, prompt: &str, response: &str) -> Self {
        self.generations
            .insert(normalize_whitespace(prompt), response.to_string());
        self
    }

    pub fn with_logprob(mut self, context: &str, target: &str, logprob: f64) -> Result<Self> {
        if logprob > 0.0 {
            return Err(Error::InvalidInput(format!(
                "scripted logprob must be <= 0, got {logprob}"
            )));
        }
        self.logprobs.insert(
            (normalize_whitespace(context), normalize_whitespace(target)),
            logprob,
        );
        Ok(self)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MockScriptFile = serde_json::from_str(&raw)?;
        let mut script = MockScript::new(file.default_logprob)?;
        for (prompt, response) in file.generations {
            script = script.with_generation(&prompt, &response);
        }
        for entry in file.logprobs {
            script = script.with_logprob(&entry.context, &entry.target, entry.logprob)?;
        }
        Ok(script)
    }

    fn generation(&self, prompt: &str) -> Option<&str> {
        self.generations
            .get(&normalize_whitespace(prompt))
            .map(|s| s.as_str())
    }

    fn logprob(&self, context: &str, target: &str) -> f64 {
        self.logprobs
            .get(&(normalize_whitespace(context), normalize_whitespace(target)))
            .copied()
            .unwrap_or(self.default_logprob)
    }
}

/// Which OpenAI-compatible route a remote LM speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Completions,
    ChatCompletions,
}

/// A language model backend: the deterministic mock or a remote endpoint.
#[derive(Debug, Clone)]
pub enum LmBackend {
    Mock {
        identity: String,
        params: LmParams,
        script: MockScript,
    },
    Remote {
        identity: String,
        params: LmParams,
        endpoint: EndpointKind,
        client: RemoteClient,
    },
}

impl LmBackend {
    pub fn mock(identity: impl Into<String>, script: MockScript) -> Self {
        LmBackend::Mock {
            identity: identity.into(),
            params: LmParams::default(),
            script,
        }
    }

    pub fn identity(&self) -> &str {
        match self {
            LmBackend::Mock { identity, .. } => identity,
            LmBackend::Remote { identity, .. } => identity,
        }
    }

    pub fn params(&self) -> &LmParams {
        match self {
            LmBackend::Mock { params, .. } => params,
            LmBackend::Remote { params, .. } => params,
        }
    }

    fn params_json(&self) -> Value {
        let p = self.params();
        json!({"temperature": p.temperature, "top_p": p.top_p, "max_tokens": p.max_tokens})
    }

    /// Generate a completion for `prompt`. Unscripted mock prompts yield an
    /// empty string with a logged warning; remote responses are cached by
    /// request hash.
    pub fn generate(&self, prompt: &str) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        match self {
            LmBackend::Mock {
                script, identity, ..
            } => Ok(match script.generation(prompt) {
                Some(response) => response.to_string(),
                None => {
                    log::warn!("mock {identity}: unscripted prompt, returning empty string");
                    String::new()
                }
            }),
            LmBackend::Remote {
                identity,
                params,
                endpoint,
                client,
            } => {
                let (path, body) = match endpoint {
                    EndpointKind::Completions => (
                        "/completions",
                        json!({
                            "model": identity,
                            "prompt": prompt,
                            "temperature": params.temperature,
                            "top_p": params.top_p,
                            "max_tokens": params.max_tokens,
                        }),
                    ),
                    EndpointKind::ChatCompletions => (
                        "/chat/completions",
                        json!({
                            "model": identity,
                            "messages": [{"role": "user", "content": prompt}],
                            "temperature": params.temperature,
                            "top_p": params.top_p,
                            "max_tokens": params.max_tokens,
                        }),
                    ),
                };
                let response =
                    client.post_cached("lm", identity, &self.params_json(), path, &body)?;
                let text = match endpoint {
                    EndpointKind::Completions => response["choices"][0]["text"].as_str(),
                    EndpointKind::ChatCompletions => {
                        response["choices"][0]["message"]["content"].as_str()
                    }
                };
                text.map(|s| s.to_string()).ok_or_else(|| Error::Remote {
                    status: None,
                    message: "completion response missing choices[0] text".into(),
                    retryable: false,
                })
            }
        }
    }

    /// Sum of log p(token | context, previous target tokens) over the
    /// target; always <= 0. Chat endpoints cannot score sequences.
    pub fn sequence_logprob(&self, context: &str, target: &str) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::InvalidInput("empty logprob target".into()));
        }
        match self {
            LmBackend::Mock { script, .. } => Ok(script.logprob(context, target)),
            LmBackend::Remote {
                identity,
                endpoint,
                client,
                ..
            } => {
                if *endpoint == EndpointKind::ChatCompletions {
                    return Err(Error::Capability(
                        "sequence logprobs require a completions endpoint with echo".into(),
                    ));
                }
                let full = format!("{context}{target}");
                let body = json!({
                    "model": identity,
                    "prompt": full,
                    "max_tokens": 0,
                    "echo": true,
                    "logprobs": 0,
                });
                let response =
                    client.post_cached("logprob", identity, &self.params_json(), "/completions", &body)?;
                let lp = &response["choices"][0]["logprobs"];
                let token_logprobs = lp["token_logprobs"].as_array().ok_or_else(|| {
                    Error::Capability("endpoint returned no token_logprobs".into())
                })?;
                let offsets = lp["text_offset"].as_array().ok_or_else(|| {
                    Error::Capability("endpoint returned no text_offset".into())
                })?;
                let boundary = context.len();
                let mut total = 0.0;
                for (lp, off) in token_logprobs.iter().zip(offsets) {
                    let off = off.as_u64().unwrap_or(0) as usize;
                    if off >= boundary {
                        total += lp.as_f64().unwrap_or(0.0);
                    }
                }
                Ok(total.min(0.0))
            }
        }
    }

    /// SCORE of a candidate context: LM task delegates to
    /// [`Self::sequence_logprob`] with the gold continuation; QA generates
    /// an answer and exact-matches it against the golds.
    pub fn score_candidate(&self, task: Task, golds: &[String], context: &str) -> Result<f64> {
        match task {
            Task::Lm => {
                let target = golds.first().ok_or_else(|| {
                    Error::InvalidInput("lm scoring needs a gold continuation".into())
                })?;
                self.sequence_logprob(context, target)
            }
            Task::Qa => {
                if golds.is_empty() {
                    return Err(Error::InvalidInput("qa scoring needs gold answers".into()));
                }
                let prediction = self.generate(context)?;
                Ok(exact_match(&prediction, golds) as f64)
            }
        }
    }
}
