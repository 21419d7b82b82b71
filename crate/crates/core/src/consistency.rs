//! Two-stage consistency training of the lightweight compressor.
//!
//! The compressor is a soft-extractive generator: a linear scorer over
//! per-sentence features followed by a softmax, whose output embedding is
//! the probability-weighted mean of candidate sentence embeddings. This
//! keeps the supervised cross-entropy and both embedding-consistency
//! losses end-to-end differentiable and finite-difference checkable.
//!
//! Stage 1 trains on clean records with the supervised loss alone; stage 2
//! adds the consistency losses under ramp-up weights that start at zero
//! and grow linearly to their maxima by the final step.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationPolicy, IdentityParaphraser};
use crate::distill::DistilledRecord;
use crate::embedding::{inner_product, AdapterMatrix, EmbeddingVector, EncoderBackend};
use crate::error::{Error, Result};
use crate::textkit::{normalize_whitespace, Segmenter};

/// Ramp schedule: `stage1_epochs` fully supervised epochs, then linear
/// growth of both lambda weights to their maxima over the stage-2 steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampConfig {
    pub stage1_epochs: usize,
    pub total_epochs: usize,
    pub lambda1_max: f64,
    pub lambda2_max: f64,
}

impl Default for RampConfig {
    fn default() -> Self {
        RampConfig {
            stage1_epochs: 3,
            total_epochs: 6,
            lambda1_max: 1.0,
            lambda2_max: 1.0,
        }
    }
}

impl RampConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage1_epochs > self.total_epochs {
            return Err(Error::Config(format!(
                "stage1_epochs {} exceeds total_epochs {}",
                self.stage1_epochs, self.total_epochs
            )));
        }
        if self.lambda1_max < 0.0 || self.lambda2_max < 0.0 {
            return Err(Error::Config("lambda maxima must be >= 0".into()));
        }
        Ok(())
    }
}

/// Epoch-level ramp weights: zero before `stage1_epochs`, then a linear
/// ramp from 0 at the first stage-2 epoch to the maxima at the final
/// epoch. A single stage-2 epoch jumps straight to the maxima.
pub fn ramp_weights(epoch: usize, cfg: &RampConfig) -> (f64, f64) {
    if epoch < cfg.stage1_epochs {
        return (0.0, 0.0);
    }
    let span = cfg.total_epochs.saturating_sub(1).saturating_sub(cfg.stage1_epochs);
    if span == 0 {
        return (cfg.lambda1_max, cfg.lambda2_max);
    }
    let fraction = ((epoch - cfg.stage1_epochs) as f64 / span as f64).min(1.0);
    (cfg.lambda1_max * fraction, cfg.lambda2_max * fraction)
}

/// Step-level ramp weights at fractional epoch `progress` (epoch index
/// plus the fraction of the epoch completed after the current step).
/// Strictly positive from the first stage-2 step, reaching the maxima at
/// the last step of the last epoch; the epoch midpoint reproduces
/// [`ramp_weights`].
pub fn ramp_weights_at(progress: f64, cfg: &RampConfig) -> (f64, f64) {
    let start = cfg.stage1_epochs as f64;
    if progress <= start {
        return (0.0, 0.0);
    }
    let span = cfg.total_epochs as f64 - start;
    if span <= 0.0 {
        return (cfg.lambda1_max, cfg.lambda2_max);
    }
    let fraction = ((progress - start) / span).clamp(0.0, 1.0);
    (cfg.lambda1_max * fraction, cfg.lambda2_max * fraction)
}

/// Loss components of one step; `total` is exactly
/// `l_s + lambda1 * l_cg + lambda2 * l_ce`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_cg: f64,
    pub l_ce: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn compose(l_s: f64, l_cg: f64, l_ce: f64, lambda1: f64, lambda2: f64) -> Self {
        LossBreakdown {
            l_s,
            l_cg,
            l_ce,
            lambda1,
            lambda2,
            total: l_s + lambda1 * l_cg + lambda2 * l_ce,
        }
    }
}

/// One training_log.jsonl line.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    #[serde(flatten)]
    pub breakdown: LossBreakdown,
}

/// Soft-extractive generator: logits are a linear function of candidate
/// features; the output distribution is their softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGenerator {
    pub feature_dim: usize,
    pub score_weights: Vec<f64>,
    pub bias: f64,
}

impl ToyGenerator {
    /// Zero-initialized: the initial distribution over candidates is
    /// uniform.
    pub fn new(feature_dim: usize) -> Self {
        ToyGenerator {
            feature_dim,
            score_weights: vec![0.0; feature_dim],
            bias: 0.0,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    /// Softmax over candidate logits plus the expectation embedding
    /// `m = sum_j q_j * enc(candidate_j)`.
    pub fn forward(&self, item: &TrainItem) -> Result<GeneratorForward> {
        if item.features.is_empty() {
            return Err(Error::InvalidInput("item has no candidates".into()));
        }
        let logits: Vec<f64> = item
            .features
            .iter()
            .map(|f| {
                self.score_weights
                    .iter()
                    .zip(f)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + self.bias
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let norm: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / norm).collect();

        let dim = item.candidate_embeddings[0].dim();
        let mut mean = vec![0.0; dim];
        for (q, emb) in probs.iter().zip(&item.candidate_embeddings) {
            for (slot, v) in mean.iter_mut().zip(emb.as_slice()) {
                *slot += q * v;
            }
        }
        Ok(GeneratorForward {
            probs,
            output_embedding: EmbeddingVector::new(mean)?,
        })
    }
}

/// Forward pass products consumed by the losses.
#[derive(Debug, Clone)]
pub struct GeneratorForward {
    pub probs: Vec<f64>,
    pub output_embedding: EmbeddingVector,
}

/// Gradients with respect to the generator parameters.
#[derive(Debug, Clone)]
pub struct GeneratorGrads {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl GeneratorGrads {
    fn zeros(dim: usize) -> Self {
        GeneratorGrads {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &GeneratorGrads, scale: f64) {
        for (slot, g) in self.weights.iter_mut().zip(&other.weights) {
            *slot += scale * g;
        }
        self.bias += scale * other.bias;
    }
}

/// A training-ready record: candidate sentences with precomputed features
/// and embeddings, supervised target indices, and the consistency target
/// embeddings.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub stage: u8,
    pub candidates: Vec<String>,
    /// Per candidate: adapted sentence embedding plus its similarity to
    /// the adapted query embedding (`dim + 1` features).
    pub features: Vec<Vec<f64>>,
    /// Per candidate encoder embedding (consistency space).
    pub candidate_embeddings: Vec<EmbeddingVector>,
    /// Indices of the selector-extract sentences among the candidates.
    pub target_indices: Vec<usize>,
    /// Encoder embedding of the teacher summary, when present.
    pub teacher_embedding: Option<EmbeddingVector>,
    /// Encoder embedding of the selector extract.
    pub extract_embedding: EmbeddingVector,
}

/// Turn a distilled record into a [`TrainItem`]: segment the record's docs
/// into candidates, locate each extract sentence among them (erroring with
/// the missing sentence's text), and embed everything once.
///
/// `downstream_policy`, when set, perturbs the query before feature
/// computation, giving the generator a different input view than the one
/// the targets were built from. Candidates are never perturbed, so the
/// supervised targets stay resolvable.
pub fn prepare_item(
    record: &DistilledRecord,
    encoder: &EncoderBackend,
    adapter: &AdapterMatrix,
    segmenter: &Segmenter,
    downstream_policy: Option<&AugmentationPolicy>,
) -> Result<TrainItem> {
    let candidates: Vec<String> = record
        .docs
        .iter()
        .flat_map(|doc| segmenter.segment(doc))
        .map(|s| s.text)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidInput("record has no candidate sentences".into()));
    }

    let mut target_indices = Vec::new();
    for extract_sentence in segmenter.segment(&record.selector_extract) {
        let wanted = normalize_whitespace(&extract_sentence.text);
        let index = candidates
            .iter()
            .position(|c| normalize_whitespace(c) == wanted)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "target sentence not among candidates: {wanted:?}"
                ))
            })?;
        target_indices.push(index);
    }
    if target_indices.is_empty() {
        return Err(Error::InvalidInput("record has an empty selector extract".into()));
    }

    let query_view = match downstream_policy {
        Some(policy) => {
            let mut rng = policy.rng_stream(&record.query);
            crate::augment::perturb_document(
                &record.query,
                policy,
                &IdentityParaphraser,
                &mut rng,
                segmenter,
            )
        }
        None => record.query.clone(),
    };
    let query_emb = adapter.apply(&encoder.embed(&query_view)?)?;

    let mut features = Vec::with_capacity(candidates.len());
    let mut candidate_embeddings = Vec::with_capacity(candidates.len());
    for candidate in &candidates {
        let raw = encoder.embed(candidate)?;
        let adapted = adapter.apply(&raw)?;
        let mut feature = adapted.as_slice().to_vec();
        feature.push(inner_product(&query_emb, &adapted)?);
        features.push(feature);
        candidate_embeddings.push(raw);
    }

    let teacher_embedding = match &record.teacher_summary {
        Some(summary) => Some(encoder.embed(summary)?),
        None => None,
    };
    let extract_embedding = encoder.embed(&record.selector_extract)?;

    Ok(TrainItem {
        stage: record.stage,
        candidates,
        features,
        candidate_embeddings,
        target_indices,
        teacher_embedding,
        extract_embedding,
    })
}

/// Supervised cross-entropy of the generator against the item's target
/// indices (uniform over them), with analytic gradients.
pub fn supervised_loss(
    generator: &ToyGenerator,
    item: &TrainItem,
) -> Result<(f64, GeneratorGrads)> {
    let forward = generator.forward(item)?;
    supervised_loss_with_forward(generator, item, &forward)
}

fn supervised_loss_with_forward(
    generator: &ToyGenerator,
    item: &TrainItem,
    forward: &GeneratorForward,
) -> Result<(f64, GeneratorGrads)> {
    let n_targets = item.target_indices.len() as f64;
    let mut value = 0.0;
    let mut target_mass = vec![0.0; forward.probs.len()];
    for &t in &item.target_indices {
        value += -forward.probs[t].ln();
        target_mass[t] += 1.0 / n_targets;
    }
    value /= n_targets;
    if !value.is_finite() {
        return Err(Error::NonFinite("supervised loss".into()));
    }

    // d value / d logit_j = q_j - r_j, r_j = target mass at j.
    let mut grads = GeneratorGrads::zeros(generator.feature_dim);
    for (j, (q, r)) in forward.probs.iter().zip(&target_mass).enumerate() {
        let c = q - r;
        for (slot, f) in grads.weights.iter_mut().zip(&item.features[j]) {
            *slot += c * f;
        }
        grads.bias += c;
    }
    Ok((value, grads))
}

/// Distance flavor for the consistency losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyNorm {
    SquaredL2,
    L2,
}

/// Both consistency losses for a stage-2 item against the generator's
/// output embedding `m`: the teacher-summary distance and the
/// selector-extract distance, with gradients through the softmax. An item
/// without a teacher summary falls back to the extract for the first loss
/// (with a warning), making the two equal.
pub struct ConsistencyLosses {
    pub l_cg: f64,
    pub l_ce: f64,
    pub grad_cg: GeneratorGrads,
    pub grad_ce: GeneratorGrads,
}

pub fn consistency_loss(
    generator: &ToyGenerator,
    item: &TrainItem,
    forward: &GeneratorForward,
    norm: ConsistencyNorm,
) -> Result<ConsistencyLosses> {
    let teacher_target = match &item.teacher_embedding {
        Some(t) => t,
        None => {
            log::warn!("stage-2 item lacks a teacher summary; using the extract for both losses");
            &item.extract_embedding
        }
    };
    let (l_cg, grad_cg) = embedding_distance_loss(generator, item, forward, teacher_target, norm)?;
    let (l_ce, grad_ce) =
        embedding_distance_loss(generator, item, forward, &item.extract_embedding, norm)?;
    Ok(ConsistencyLosses {
        l_cg,
        l_ce,
        grad_cg,
        grad_ce,
    })
}

fn embedding_distance_loss(
    generator: &ToyGenerator,
    item: &TrainItem,
    forward: &GeneratorForward,
    target: &EmbeddingVector,
    norm: ConsistencyNorm,
) -> Result<(f64, GeneratorGrads)> {
    let m = &forward.output_embedding;
    if m.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: target.dim(),
        });
    }
    let squared: f64 = m
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let (value, outer_scale) = match norm {
        ConsistencyNorm::SquaredL2 => (squared, 1.0),
        // d sqrt(s)/ds = 1/(2 sqrt(s)); guarded at zero distance.
        ConsistencyNorm::L2 => {
            let distance = squared.sqrt();
            (distance, 1.0 / (2.0 * distance.max(1e-12)))
        }
    };

    // d squared / d logit_k = 2 q_k (m - target) . (e_k - m).
    let diff: Vec<f64> = m
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let mut grads = GeneratorGrads::zeros(generator.feature_dim);
    for (k, (q, emb)) in forward
        .probs
        .iter()
        .zip(&item.candidate_embeddings)
        .enumerate()
    {
        let dot: f64 = diff
            .iter()
            .zip(emb.as_slice().iter().zip(m.as_slice()))
            .map(|(d, (e, mv))| d * (e - mv))
            .sum();
        let c = outer_scale * 2.0 * q * dot;
        for (slot, f) in grads.weights.iter_mut().zip(&item.features[k]) {
            *slot += c * f;
        }
        grads.bias += c;
    }
    Ok((value, grads))
}

/// Trainer configuration. Defaults: 6 epochs with the first 3 fully
/// supervised, batch size 32.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyTrainConfig {
    pub ramp: RampConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub norm: ConsistencyNorm,
    /// Optional adapter for candidate features (identity when absent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_adapter: Option<AdapterMatrix>,
    /// Optional downstream perturbation of the generator's query view for
    /// stage-2 items.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub downstream_policy: Option<AugmentationPolicy>,
}

impl Default for ConsistencyTrainConfig {
    fn default() -> Self {
        ConsistencyTrainConfig {
            ramp: RampConfig::default(),
            lr: 0.05,
            batch_size: 32,
            seed: 0,
            norm: ConsistencyNorm::SquaredL2,
            feature_adapter: None,
            downstream_policy: None,
        }
    }
}

/// Training outcome: the generator, per-epoch mean breakdowns, and the
/// per-step log emitted as training_log.jsonl.
#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub generator: ToyGenerator,
    pub epoch_breakdowns: Vec<LossBreakdown>,
    pub step_log: Vec<StepLog>,
}

struct GeneratorAdam {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: f64,
    v_b: f64,
    t: u64,
    lr: f64,
}

impl GeneratorAdam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize, lr: f64) -> Self {
        GeneratorAdam {
            m_w: vec![0.0; dim],
            v_w: vec![0.0; dim],
            m_b: 0.0,
            v_b: 0.0,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, generator: &mut ToyGenerator, grads: &GeneratorGrads) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..generator.score_weights.len() {
            let g = grads.weights[i];
            self.m_w[i] = Self::BETA1 * self.m_w[i] + (1.0 - Self::BETA1) * g;
            self.v_w[i] = Self::BETA2 * self.v_w[i] + (1.0 - Self::BETA2) * g * g;
            generator.score_weights[i] -=
                self.lr * (self.m_w[i] / bc1) / ((self.v_w[i] / bc2).sqrt() + Self::EPS);
        }
        let g = grads.bias;
        self.m_b = Self::BETA1 * self.m_b + (1.0 - Self::BETA1) * g;
        self.v_b = Self::BETA2 * self.v_b + (1.0 - Self::BETA2) * g * g;
        generator.bias -= self.lr * (self.m_b / bc1) / ((self.v_b / bc2).sqrt() + Self::EPS);
    }
}

/// Two-stage training over the stage-1 and stage-2 record sets.
/// Deterministic given the seed: shuffle order and batch partition are
/// fixed, and the per-step lambda schedule depends only on step indices.
pub fn train_two_stage(
    t1: &[DistilledRecord],
    t2: &[DistilledRecord],
    encoder: &EncoderBackend,
    segmenter: &Segmenter,
    cfg: &ConsistencyTrainConfig,
) -> Result<TwoStageOutcome> {
    cfg.ramp.validate()?;
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("lr must be > 0, got {}", cfg.lr)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if t1.is_empty() {
        return Err(Error::InvalidInput("stage-1 set is empty".into()));
    }
    if cfg.ramp.total_epochs > cfg.ramp.stage1_epochs && t2.is_empty() {
        return Err(Error::InvalidInput(
            "stage-2 epochs configured but the stage-2 set is empty".into(),
        ));
    }

    let adapter = cfg
        .feature_adapter
        .clone()
        .unwrap_or_else(|| AdapterMatrix::identity(encoder.dimension()));
    let items1: Vec<TrainItem> = t1
        .iter()
        .map(|r| prepare_item(r, encoder, &adapter, segmenter, None))
        .collect::<Result<_>>()?;
    let items2: Vec<TrainItem> = t2
        .iter()
        .map(|r| {
            prepare_item(
                r,
                encoder,
                &adapter,
                segmenter,
                cfg.downstream_policy.as_ref(),
            )
        })
        .collect::<Result<_>>()?;

    let feature_dim = items1[0].features[0].len();
    let mut generator = ToyGenerator::new(feature_dim);
    let mut optimizer = GeneratorAdam::new(feature_dim, cfg.lr);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut epoch_breakdowns = Vec::with_capacity(cfg.ramp.total_epochs);
    let mut step_log = Vec::new();

    for epoch in 0..cfg.ramp.total_epochs {
        let stage2 = epoch >= cfg.ramp.stage1_epochs;
        let items = if stage2 { &items2 } else { &items1 };
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);
        let steps_in_epoch = order.chunks(cfg.batch_size).count();

        let mut epoch_totals = (0.0, 0.0, 0.0, 0.0, 0.0); // l_s, l_cg, l_ce, l1, l2
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let progress = epoch as f64 + (step as f64 + 1.0) / steps_in_epoch as f64;
            let (lambda1, lambda2) = if stage2 {
                ramp_weights_at(progress, &cfg.ramp)
            } else {
                (0.0, 0.0)
            };

            let n = chunk.len() as f64;
            let mut batch_ls = 0.0;
            let mut batch_lcg = 0.0;
            let mut batch_lce = 0.0;
            let mut grads = GeneratorGrads::zeros(feature_dim);
            for &i in chunk {
                let item = &items[i];
                let forward = generator.forward(item)?;
                let (l_s, g_s) = supervised_loss_with_forward(&generator, item, &forward)?;
                batch_ls += l_s / n;
                grads.add_scaled(&g_s, 1.0 / n);
                if stage2 {
                    let c = consistency_loss(&generator, item, &forward, cfg.norm)?;
                    batch_lcg += c.l_cg / n;
                    batch_lce += c.l_ce / n;
                    grads.add_scaled(&c.grad_cg, lambda1 / n);
                    grads.add_scaled(&c.grad_ce, lambda2 / n);
                }
            }
            let breakdown =
                LossBreakdown::compose(batch_ls, batch_lcg, batch_lce, lambda1, lambda2);
            if !breakdown.total.is_finite() {
                return Err(Error::TrainingDiverged(format!("epoch {epoch}, step {step}")));
            }
            optimizer.step(&mut generator, &grads);
            step_log.push(StepLog {
                epoch,
                step,
                breakdown,
            });
            epoch_totals.0 += batch_ls;
            epoch_totals.1 += batch_lcg;
            epoch_totals.2 += batch_lce;
            epoch_totals.3 += lambda1;
            epoch_totals.4 += lambda2;
        }
        let k = steps_in_epoch as f64;
        epoch_breakdowns.push(LossBreakdown::compose(
            epoch_totals.0 / k,
            epoch_totals.1 / k,
            epoch_totals.2 / k,
            epoch_totals.3 / k,
            epoch_totals.4 / k,
        ));
    }

    Ok(TwoStageOutcome {
        generator,
        epoch_breakdowns,
        step_log,
    })
}
