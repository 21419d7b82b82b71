//! Post-retrieval context compression for retrieval-augmented generation.
//!
//! The pipeline retrieves documents with BM25, trains a linear-adapter
//! sentence selector with a weighted contrastive loss, builds distilled
//! training sets from teacher/student language models, and trains a
//! lightweight compressor under a two-stage consistency objective.
//! Deterministic test backends (hash encoder, scripted LM mock) make every
//! stage reproducible offline; remote OpenAI-compatible backends plug in
//! behind the same interfaces.

pub mod augment;
pub mod cache;
pub mod config;
pub mod consistency;
pub mod contrastive;
pub mod data;
pub mod distill;
pub mod embedding;
pub mod error;
pub mod evalkit;
pub mod gradcheck;
pub mod lm;
pub mod net;
pub mod retrieval;
pub mod seeds;
pub mod selector;
pub mod synthetic;
pub mod textkit;

pub use error::{Error, Result};
