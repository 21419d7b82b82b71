//! The weighted contrastive loss over adapted embeddings, its analytic
//! adapter gradient, the training loop, and inference-time sentence
//! selection.
//!
//! Per example with similarities `s_j = <A e_x, A e_j>` over the positive,
//! semi-positives, and negatives, the loss term is
//! `-log( exp(s_pos/tau) / (w_pos * sum_j w_j exp(s_j/tau)) )` with
//! `w_pos = w_neg = 1` and semi-positive weights from the build step; the
//! batch loss is the sum over examples. The log-sum-exp path is used
//! internally so large similarities cannot overflow.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::ContrastiveExample;
use crate::embedding::{inner_product, AdapterMatrix, EmbeddingVector, EncoderBackend};
use crate::error::{Error, Result};
use crate::textkit::{Segmenter, Sentence};

/// One contrastive example with base embeddings precomputed; the loss only
/// touches the adapter.
#[derive(Debug, Clone)]
pub struct EmbeddedExample {
    pub query: EmbeddingVector,
    pub positive: EmbeddingVector,
    /// `(embedding, weight)` pairs; weights come from the build step.
    pub semi_positives: Vec<(EmbeddingVector, f64)>,
    pub negatives: Vec<EmbeddingVector>,
}

/// A batch of embedded examples with the softmax temperature.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch<'a> {
    pub examples: &'a [EmbeddedExample],
    pub tau: f64,
}

/// Embed a built dataset against `encoder` once, ahead of training.
pub fn embed_dataset(
    encoder: &EncoderBackend,
    dataset: &[ContrastiveExample],
) -> Result<Vec<EmbeddedExample>> {
    dataset
        .iter()
        .map(|ex| {
            Ok(EmbeddedExample {
                query: encoder.embed(&ex.query)?,
                positive: encoder.embed(&ex.positive.text)?,
                semi_positives: ex
                    .semi_positives
                    .iter()
                    .map(|w| Ok((encoder.embed(&w.sentence.text)?, w.weight)))
                    .collect::<Result<_>>()?,
                negatives: ex
                    .negatives
                    .iter()
                    .map(|n| encoder.embed(&n.text))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Batch loss and its analytic gradient with respect to the adapter.
pub fn contrastive_loss(
    batch: &ContrastiveBatch<'_>,
    adapter: &AdapterMatrix,
) -> Result<(f64, AdapterMatrix)> {
    if batch.examples.is_empty() {
        return Err(Error::InvalidInput("empty contrastive batch".into()));
    }
    if !(batch.tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {}", batch.tau)));
    }
    let mut total = 0.0;
    let mut grad = AdapterMatrix::zeros(adapter.d_out, adapter.d_in);

    for example in batch.examples {
        let (loss, _) = example_loss_grad(example, adapter, batch.tau, Some(&mut grad))?;
        total += loss;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("contrastive loss".into()));
    }
    Ok((total, grad))
}

/// Loss of one example; when `grad_acc` is given the example's adapter
/// gradient is accumulated into it.
fn example_loss_grad(
    example: &EmbeddedExample,
    adapter: &AdapterMatrix,
    tau: f64,
    grad_acc: Option<&mut AdapterMatrix>,
) -> Result<(f64, ())> {
    // Candidate list: positive first, then semi-positives, then negatives.
    let mut bases: Vec<&EmbeddingVector> = Vec::with_capacity(
        1 + example.semi_positives.len() + example.negatives.len(),
    );
    let mut weights: Vec<f64> = Vec::with_capacity(bases.capacity());
    bases.push(&example.positive);
    weights.push(1.0);
    for (emb, w) in &example.semi_positives {
        bases.push(emb);
        weights.push(*w);
    }
    for emb in &example.negatives {
        bases.push(emb);
        weights.push(1.0);
    }

    let u = adapter.apply(&example.query)?;
    let mapped: Vec<EmbeddingVector> = bases
        .iter()
        .map(|b| adapter.apply(b))
        .collect::<Result<_>>()?;
    let z: Vec<f64> = mapped
        .iter()
        .map(|v| inner_product(&u, v).map(|s| s / tau))
        .collect::<Result<_>>()?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scaled similarity".into()));
    }

    let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = z
        .iter()
        .zip(&weights)
        .map(|(zj, wj)| wj * (zj - z_max).exp())
        .sum();
    let log_denom = z_max + denom.ln();
    let loss = -z[0] + log_denom;

    if let Some(grad) = grad_acc {
        // dL/ds_j = (q_j - [j == pos]) / tau with
        // q_j = w_j exp(z_j) / sum_k w_k exp(z_k);
        // ds_j/dA = u e_j^T + v_j e_x^T.
        let d_in = adapter.d_in;
        let mut coeff_e = vec![0.0; d_in]; // sum_j c_j e_j
        let mut coeff_v = vec![0.0; adapter.d_out]; // sum_j c_j v_j
        for (j, (zj, wj)) in z.iter().zip(&weights).enumerate() {
            let q = wj * (zj - z_max).exp() / denom;
            let c = (q - if j == 0 { 1.0 } else { 0.0 }) / tau;
            for (slot, e) in coeff_e.iter_mut().zip(bases[j].as_slice()) {
                *slot += c * e;
            }
            for (slot, v) in coeff_v.iter_mut().zip(mapped[j].as_slice()) {
                *slot += c * v;
            }
        }
        let ex = example.query.as_slice();
        let us = u.as_slice();
        for row in 0..adapter.d_out {
            let base = row * d_in;
            for col in 0..d_in {
                grad.weights[base + col] += us[row] * coeff_e[col] + coeff_v[row] * ex[col];
            }
        }
    }
    Ok((loss, ()))
}

/// Selector training configuration. The defaults echo the reference
/// training recipe; desk-scale fixtures override them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorTrainConfig {
    pub lr: f64,
    pub warmup_steps: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SelectorTrainConfig {
    fn default() -> Self {
        SelectorTrainConfig {
            lr: 1e-5,
            warmup_steps: 2000,
            epochs: 5,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl SelectorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training outcome: per-epoch mean loss, the final adapter, and the seed
/// that reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub seed: u64,
    pub tau: f64,
    pub adapter: AdapterMatrix,
}

impl TrainReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Adam with linear learning-rate warmup.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    warmup: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64, warmup: u64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            warmup,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let warm = if self.warmup == 0 {
            1.0
        } else {
            (self.t as f64 / self.warmup as f64).min(1.0)
        };
        let lr = self.lr * warm;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Train the adapter from identity over the embedded dataset. Shuffle
/// order and batch partition are fixed by the seed, so runs reproduce
/// bitwise.
pub fn train_selector(
    dataset: &[EmbeddedExample],
    dim: usize,
    tau: f64,
    cfg: &SelectorTrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty training dataset".into()));
    }
    let mut adapter = AdapterMatrix::identity(dim);
    let mut optimizer = Adam::new(dim * dim, cfg.lr, cfg.warmup_steps);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<EmbeddedExample> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let view = ContrastiveBatch {
                examples: &batch,
                tau,
            };
            let (loss, grad) = contrastive_loss(&view, &adapter)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "epoch {epoch}, step {steps}"
                )));
            }
            optimizer.step(&mut adapter.weights, &grad.weights);
            steps += 1;
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / dataset.len() as f64);
    }

    Ok(TrainReport {
        epoch_losses,
        steps,
        seed: cfg.seed,
        tau,
        adapter,
    })
}

/// Rank all sentences of all docs by adapted similarity to the query and
/// return the top `k` in original document order.
pub fn select_sentences(
    encoder: &EncoderBackend,
    adapter: &AdapterMatrix,
    query: &str,
    docs: &[String],
    k: usize,
    segmenter: &Segmenter,
) -> Result<Vec<Sentence>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let sentences: Vec<Sentence> = docs
        .iter()
        .enumerate()
        .flat_map(|(i, doc)| segmenter.segment_doc(&i.to_string(), doc))
        .collect();
    if sentences.is_empty() {
        return Err(Error::InvalidInput("no sentences to select from".into()));
    }
    let query_emb = adapter.apply(&encoder.embed(query)?)?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(sentences.len());
    for (pos, sentence) in sentences.iter().enumerate() {
        let emb = adapter.apply(&encoder.embed(&sentence.text)?)?;
        scored.push((pos, inner_product(&query_emb, &emb)?));
    }
    // Stable: equal scores keep document order.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut picked: Vec<usize> = scored.iter().take(k).map(|&(pos, _)| pos).collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|pos| sentences[pos].clone()).collect())
}

/// Selected sentences joined by single spaces in document order: the
/// compressed context string.
pub fn compress_to_summary(
    encoder: &EncoderBackend,
    adapter: &AdapterMatrix,
    query: &str,
    docs: &[String],
    k: usize,
    segmenter: &Segmenter,
) -> Result<String> {
    let selected = select_sentences(encoder, adapter, query, docs, k, segmenter)?;
    Ok(selected
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Direct scalar re-computation of the loss, no log-sum-exp, no reuse
    /// of the implementation path.
    pub fn oracle_loss(batch: &ContrastiveBatch<'_>, adapter: &AdapterMatrix) -> f64 {
        let matvec = |m: &AdapterMatrix, x: &EmbeddingVector| -> Vec<f64> {
            (0..m.d_out)
                .map(|r| {
                    (0..m.d_in)
                        .map(|c| m.get(r, c) * x.as_slice()[c])
                        .sum::<f64>()
                })
                .collect()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut total = 0.0;
        for ex in batch.examples {
            let u = matvec(adapter, &ex.query);
            let mut sims = Vec::new();
            let mut weights = Vec::new();
            sims.push(dot(&u, &matvec(adapter, &ex.positive)));
            weights.push(1.0);
            for (e, w) in &ex.semi_positives {
                sims.push(dot(&u, &matvec(adapter, e)));
                weights.push(*w);
            }
            for e in &ex.negatives {
                sims.push(dot(&u, &matvec(adapter, e)));
                weights.push(1.0);
            }
            let denom: f64 = sims
                .iter()
                .zip(&weights)
                .map(|(s, w)| w * (s / batch.tau).exp())
                .sum();
            total += -((sims[0] / batch.tau).exp() / (1.0 * denom)).ln();
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::gradcheck::{random_adapter, random_embedded_example as random_example};

    fn vector(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn singleton_softmax_loss_is_zero() {
        let example = EmbeddedExample {
            query: vector(&[1.0, 0.0]),
            positive: vector(&[0.5, 0.5]),
            semi_positives: vec![],
            negatives: vec![],
        };
        let batch = ContrastiveBatch {
            examples: std::slice::from_ref(&example),
            tau: 0.05,
        };
        let (loss, _) = contrastive_loss(&batch, &AdapterMatrix::identity(2)).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn equal_positive_negative_gives_ln2() {
        let shared = vector(&[0.3, 0.4]);
        let example = EmbeddedExample {
            query: vector(&[1.0, 2.0]),
            positive: shared.clone(),
            semi_positives: vec![],
            negatives: vec![shared],
        };
        let batch = ContrastiveBatch {
            examples: std::slice::from_ref(&example),
            tau: 0.05,
        };
        let (loss, _) = contrastive_loss(&batch, &AdapterMatrix::identity(2)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_oracle_on_weighted_example() {
        let example = EmbeddedExample {
            query: vector(&[0.9, -0.2, 0.4]),
            positive: vector(&[0.1, 0.8, -0.3]),
            semi_positives: vec![(vector(&[0.2, 0.7, -0.1]), 20.0)],
            negatives: vec![vector(&[-0.6, 0.1, 0.9])],
        };
        let adapter = AdapterMatrix::from_rows(&[
            vec![1.1, 0.2, 0.0],
            vec![-0.1, 0.9, 0.3],
            vec![0.0, 0.1, 1.2],
        ])
        .unwrap();
        let batch = ContrastiveBatch {
            examples: std::slice::from_ref(&example),
            tau: 0.05,
        };
        let (loss, _) = contrastive_loss(&batch, &adapter).unwrap();
        let expected = oracle_loss(&batch, &adapter);
        assert!((loss - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn tau_scaling_leaves_loss_unchanged() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let example = random_example(&mut rng, 4, 5);
        // Scale every embedding by 2 => similarities scale by 4 exactly.
        let scale = |v: &EmbeddingVector| {
            EmbeddingVector::new(v.as_slice().iter().map(|x| x * 2.0).collect()).unwrap()
        };
        let scaled = EmbeddedExample {
            query: scale(&example.query),
            positive: scale(&example.positive),
            semi_positives: example
                .semi_positives
                .iter()
                .map(|(e, w)| (scale(e), *w))
                .collect(),
            negatives: example.negatives.iter().map(scale).collect(),
        };
        let adapter = AdapterMatrix::identity(4);
        let base = ContrastiveBatch {
            examples: std::slice::from_ref(&example),
            tau: 0.05,
        };
        let scaled_batch = ContrastiveBatch {
            examples: std::slice::from_ref(&scaled),
            tau: 0.05 * 4.0,
        };
        let (a, _) = contrastive_loss(&base, &adapter).unwrap();
        let (b, _) = contrastive_loss(&scaled_batch, &adapter).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn loss_monotone_in_positive_similarity_and_weights() {
        let make = |pos_scale: f64, semi_weight: f64| {
            let example = EmbeddedExample {
                query: vector(&[1.0, 0.0]),
                positive: vector(&[pos_scale, 0.0]),
                semi_positives: vec![(vector(&[0.2, 0.5]), semi_weight)],
                negatives: vec![vector(&[0.0, 1.0])],
            };
            let batch = ContrastiveBatch {
                examples: std::slice::from_ref(&example),
                tau: 0.5,
            };
            contrastive_loss(&batch, &AdapterMatrix::identity(2))
                .unwrap()
                .0
        };
        // Raising s_pos strictly lowers the loss.
        assert!(make(0.9, 5.0) < make(0.5, 5.0));
        // Raising a non-positive weight strictly raises the loss.
        assert!(make(0.5, 10.0) > make(0.5, 5.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let dim = 8;
        for _ in 0..5 {
            let examples: Vec<EmbeddedExample> =
                (0..3).map(|_| random_example(&mut rng, dim, 6)).collect();
            let adapter = random_adapter(&mut rng, dim);
            let batch = ContrastiveBatch {
                examples: &examples,
                tau: 0.05,
            };
            let (_, grad) = contrastive_loss(&batch, &adapter).unwrap();
            let h = 1e-5;
            for idx in [0usize, 7, 13, 36, 63] {
                let mut plus = adapter.clone();
                plus.weights[idx] += h;
                let mut minus = adapter.clone();
                minus.weights[idx] -= h;
                let fd = (contrastive_loss(&batch, &plus).unwrap().0
                    - contrastive_loss(&batch, &minus).unwrap().0)
                    / (2.0 * h);
                let analytic = grad.weights[idx];
                let rel = crate::gradcheck::rel_err(analytic, fd);
                assert!(rel <= 1e-4, "rel error {rel} at weight {idx}");
            }
        }
    }

    #[test]
    fn zero_epochs_returns_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let dataset: Vec<EmbeddedExample> =
            (0..4).map(|_| random_example(&mut rng, 4, 4)).collect();
        let cfg = SelectorTrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let report = train_selector(&dataset, 4, 0.05, &cfg).unwrap();
        assert_eq!(report.steps, 0);
        assert_eq!(report.adapter, AdapterMatrix::identity(4));
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn default_config_echoes_reference_recipe() {
        let cfg = SelectorTrainConfig::default();
        assert_eq!(cfg.lr, 1e-5);
        assert_eq!(cfg.warmup_steps, 2000);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.batch_size, 64);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let dataset: Vec<EmbeddedExample> =
            (0..10).map(|_| random_example(&mut rng, 4, 5)).collect();
        let cfg = SelectorTrainConfig {
            lr: 1e-2,
            warmup_steps: 2,
            epochs: 3,
            batch_size: 4,
            seed: 9,
        };
        let a = train_selector(&dataset, 4, 0.05, &cfg).unwrap();
        let b = train_selector(&dataset, 4, 0.05, &cfg).unwrap();
        assert_eq!(a.adapter, b.adapter);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn select_sentences_matches_direct_ranking() {
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let segmenter = Segmenter::default();
        let docs = vec![
            "Alpha fact one. Beta fact two.".to_string(),
            "Gamma fact three. Delta fact four.".to_string(),
        ];
        let query = "which fact";
        let selected =
            select_sentences(&encoder, &adapter, query, &docs, 2, &segmenter).unwrap();

        // Brute-force oracle: rank by raw inner products.
        let all: Vec<Sentence> = docs
            .iter()
            .enumerate()
            .flat_map(|(i, d)| segmenter.segment_doc(&i.to_string(), d))
            .collect();
        let q = encoder.embed(query).unwrap();
        let mut scored: Vec<(usize, f64)> = all
            .iter()
            .enumerate()
            .map(|(pos, s)| {
                (
                    pos,
                    inner_product(&q, &encoder.embed(&s.text).unwrap()).unwrap(),
                )
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut expected: Vec<usize> = scored.iter().take(2).map(|&(p, _)| p).collect();
        expected.sort_unstable();
        let expected: Vec<&Sentence> = expected.iter().map(|&p| &all[p]).collect();
        assert_eq!(selected.len(), 2);
        for (got, want) in selected.iter().zip(expected) {
            assert_eq!(got.text, want.text);
        }
    }

    #[test]
    fn select_saturates_and_k1_is_argmax() {
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let segmenter = Segmenter::default();
        let docs = vec!["One here. Two there.".to_string()];
        let all = select_sentences(&encoder, &adapter, "q", &docs, 10, &segmenter).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].text, "One here.");
        assert_eq!(all[1].text, "Two there.");

        let top1 = select_sentences(&encoder, &adapter, "q", &docs, 1, &segmenter).unwrap();
        assert_eq!(top1.len(), 1);
    }

    #[test]
    fn selection_set_invariant_under_doc_permutation() {
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        let segmenter = Segmenter::default();
        let docs = vec![
            "Quartz shard. Copper wire.".to_string(),
            "Maple leaf. Granite slab.".to_string(),
        ];
        let permuted = vec![docs[1].clone(), docs[0].clone()];
        let texts = |sel: Vec<Sentence>| {
            let mut t: Vec<String> = sel.into_iter().map(|s| s.text).collect();
            t.sort();
            t
        };
        let a = texts(select_sentences(&encoder, &adapter, "q", &docs, 2, &segmenter).unwrap());
        let b =
            texts(select_sentences(&encoder, &adapter, "q", &permuted, 2, &segmenter).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn select_errors_without_sentences() {
        let encoder = EncoderBackend::deterministic_test("enc", 8);
        let adapter = AdapterMatrix::identity(8);
        assert!(select_sentences(
            &encoder,
            &adapter,
            "q",
            &[],
            1,
            &Segmenter::default()
        )
        .is_err());
    }
}
