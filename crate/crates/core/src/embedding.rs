//! Sentence encoders, the trainable linear adapter, and similarity
//! primitives.
//!
//! The deterministic test encoder maps text to a reproducible pseudo-random
//! vector: seed = first 8 bytes (big-endian) of
//! `SHA-256(identity || 0x1F || text)`, then entry `i` is the first 8 bytes
//! of `SHA-256(seed_be || i_be)` scaled to `[-1, 1)` via `u/2^64 * 2 - 1`.
//! The remote encoder speaks the OpenAI embeddings shape.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::RemoteClient;

/// Fixed-dimension real vector produced by an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wrap raw values, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {bad}")));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Inner product of two equal-dimension vectors.
pub fn inner_product(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum())
}

/// Squared L2 distance between two equal-dimension vectors.
pub fn squared_l2_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Trainable linear map applied on top of a frozen encoder. Initialized to
/// identity so an untrained adapter is a no-op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterMatrix {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out x d_in`.
    pub weights: Vec<f64>,
}

impl AdapterMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        AdapterMatrix {
            d_in: dim,
            d_out: dim,
            weights,
        }
    }

    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        AdapterMatrix {
            d_in,
            d_out,
            weights: vec![0.0; d_out * d_in],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d_out = rows.len();
        let d_in = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d_in) {
            return Err(Error::InvalidInput("ragged adapter rows".into()));
        }
        Ok(AdapterMatrix {
            d_in,
            d_out,
            weights: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.d_in + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.weights[row * self.d_in + col] = value;
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.d_in * self.d_out {
            return Err(Error::InvalidInput(format!(
                "adapter weight count {} != {}x{}",
                self.weights.len(),
                self.d_out,
                self.d_in
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("adapter weights".into()));
        }
        Ok(())
    }

    /// Matrix–vector product.
    pub fn apply(&self, v: &EmbeddingVector) -> Result<EmbeddingVector> {
        if v.dim() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: v.dim(),
            });
        }
        let x = v.as_slice();
        let mut out = vec![0.0; self.d_out];
        for (row, slot) in out.iter_mut().enumerate() {
            let base = row * self.d_in;
            *slot = self.weights[base..base + self.d_in]
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum();
        }
        EmbeddingVector::new(out)
    }

    /// Persist as JSON `{"d_in", "d_out", "weights"}`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let adapter: AdapterMatrix = serde_json::from_str(&raw)?;
        adapter.validate()?;
        Ok(adapter)
    }
}

/// Apply the adapter to an embedding; the free-function spelling of
/// [`AdapterMatrix::apply`].
pub fn apply_adapter(adapter: &AdapterMatrix, v: &EmbeddingVector) -> Result<EmbeddingVector> {
    adapter.apply(v)
}

/// A sentence encoder. `embed` is a pure function of `(identity, text)`.
#[derive(Debug, Clone)]
pub enum EncoderBackend {
    /// Seeded hash expansion; reproducible everywhere, no network.
    DeterministicTest { identity: String, dimension: usize },
    /// OpenAI-compatible `/embeddings` endpoint.
    Remote {
        identity: String,
        dimension: usize,
        client: RemoteClient,
    },
}

impl EncoderBackend {
    pub fn deterministic_test(identity: impl Into<String>, dimension: usize) -> Self {
        EncoderBackend::DeterministicTest {
            identity: identity.into(),
            dimension,
        }
    }

    pub fn identity(&self) -> &str {
        match self {
            EncoderBackend::DeterministicTest { identity, .. } => identity,
            EncoderBackend::Remote { identity, .. } => identity,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            EncoderBackend::DeterministicTest { dimension, .. } => *dimension,
            EncoderBackend::Remote { dimension, .. } => *dimension,
        }
    }

    /// Embed one text. Deterministic per `(identity, text)`; remote calls
    /// go through the shared response cache.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        match self {
            EncoderBackend::DeterministicTest {
                identity,
                dimension,
            } => Ok(deterministic_embedding(identity, text, *dimension)),
            EncoderBackend::Remote {
                identity,
                dimension,
                client,
            } => {
                let body = json!({"model": identity, "input": [text]});
                let response =
                    client.post_cached("embeddings", identity, &json!({}), "/embeddings", &body)?;
                let values = response["data"]
                    .get(0)
                    .and_then(|d| d["embedding"].as_array())
                    .ok_or_else(|| Error::Remote {
                        status: None,
                        message: "embeddings response missing data[0].embedding".into(),
                        retryable: false,
                    })?
                    .iter()
                    .map(|v| v.as_f64().unwrap_or(f64::NAN))
                    .collect::<Vec<_>>();
                if values.len() != *dimension {
                    return Err(Error::DimensionMismatch {
                        expected: *dimension,
                        got: values.len(),
                    });
                }
                EmbeddingVector::new(values)
            }
        }
    }
}

/// The documented hash-expansion recipe behind the deterministic test
/// encoder. Exposed so independent re-implementations can be checked
/// against it.
pub fn deterministic_embedding(identity: &str, text: &str, dimension: usize) -> EmbeddingVector {
    let mut hasher = Sha256::new();
    hasher.update(identity.as_bytes());
    hasher.update([0x1f]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let seed = u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"));

    let values = (0..dimension as u64)
        .map(|i| {
            let mut h = Sha256::new();
            h.update(seed.to_be_bytes());
            h.update(i.to_be_bytes());
            let d = h.finalize();
            let u = u64::from_be_bytes(d[..8].try_into().expect("sha256 is 32 bytes"));
            (u as f64 / 2f64.powi(64)) * 2.0 - 1.0
        })
        .collect();
    EmbeddingVector(values)
}
