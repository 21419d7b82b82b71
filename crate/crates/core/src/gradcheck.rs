//! Finite-difference verification of every analytic gradient in the
//! crate: the contrastive loss with respect to the adapter, and the
//! supervised and consistency losses with respect to the generator
//! parameters. Central differences with step `1e-5`, relative tolerance
//! `1e-4`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::consistency::{
    consistency_loss, supervised_loss, ConsistencyNorm, ToyGenerator, TrainItem,
};
use crate::embedding::{AdapterMatrix, EmbeddingVector};
use crate::error::Result;
use crate::selector::{contrastive_loss, ContrastiveBatch, EmbeddedExample};

pub const TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;

/// One suite's outcome.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub suite: &'static str,
    pub fixtures: usize,
    pub checks: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Relative error with a near-zero floor: below 1e-3 gradient magnitude
/// the test degrades to an absolute bound of tolerance * 1e-3, which still
/// sits orders of magnitude above central-difference noise.
pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3)
}

fn random_vector(rng: &mut ChaCha12Rng, dim: usize) -> EmbeddingVector {
    EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("finite by construction")
}

/// Random contrastive example with at most `max_sentences` sentences.
pub fn random_embedded_example(
    rng: &mut ChaCha12Rng,
    dim: usize,
    max_sentences: usize,
) -> EmbeddedExample {
    let n_semi = rng.gen_range(0..=max_sentences.saturating_sub(2).min(2));
    let n_neg = rng.gen_range(1..=(max_sentences - 1 - n_semi).max(1));
    EmbeddedExample {
        query: random_vector(rng, dim),
        positive: random_vector(rng, dim),
        semi_positives: (0..n_semi)
            .map(|_| (random_vector(rng, dim), rng.gen_range(0.5..30.0)))
            .collect(),
        negatives: (0..n_neg).map(|_| random_vector(rng, dim)).collect(),
    }
}

/// Identity plus uniform noise; keeps similarities well-scaled.
pub fn random_adapter(rng: &mut ChaCha12Rng, dim: usize) -> AdapterMatrix {
    let mut adapter = AdapterMatrix::identity(dim);
    for w in adapter.weights.iter_mut() {
        *w += rng.gen_range(-0.3..0.3);
    }
    adapter
}

/// Random training item with `n` candidates in embedding dimension `dim`
/// (features are `dim + 1` wide).
pub fn random_train_item(rng: &mut ChaCha12Rng, dim: usize, n: usize) -> TrainItem {
    let candidate_embeddings: Vec<EmbeddingVector> =
        (0..n).map(|_| random_vector(rng, dim)).collect();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim + 1).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let n_targets = rng.gen_range(1..=n.min(2));
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n_targets {
        let j = i + rng.gen_range(0..n - i);
        order.swap(i, j);
    }
    order.truncate(n_targets);
    TrainItem {
        stage: 2,
        candidates: (0..n).map(|i| format!("candidate {i}")).collect(),
        features,
        candidate_embeddings,
        target_indices: order,
        teacher_embedding: Some(random_vector(rng, dim)),
        extract_embedding: random_vector(rng, dim),
    }
}

pub fn random_generator(rng: &mut ChaCha12Rng, feature_dim: usize) -> ToyGenerator {
    ToyGenerator {
        feature_dim,
        score_weights: (0..feature_dim).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        bias: rng.gen_range(-0.5..0.5),
    }
}

/// Contrastive loss vs. central differences over every adapter entry.
pub fn check_contrastive(seed: u64, fixtures: usize) -> Result<GradcheckReport> {
    let dim = 8;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..fixtures {
        let examples: Vec<EmbeddedExample> = (0..rng.gen_range(1..=3))
            .map(|_| random_embedded_example(&mut rng, dim, 6))
            .collect();
        let adapter = random_adapter(&mut rng, dim);
        let batch = ContrastiveBatch {
            examples: &examples,
            tau: 0.05,
        };
        let (_, grad) = contrastive_loss(&batch, &adapter)?;
        for idx in 0..adapter.weights.len() {
            let mut plus = adapter.clone();
            plus.weights[idx] += STEP;
            let mut minus = adapter.clone();
            minus.weights[idx] -= STEP;
            let fd = (contrastive_loss(&batch, &plus)?.0 - contrastive_loss(&batch, &minus)?.0)
                / (2.0 * STEP);
            max_rel = max_rel.max(rel_err(grad.weights[idx], fd));
            checks += 1;
        }
    }
    Ok(GradcheckReport {
        suite: "contrastive_loss/adapter",
        fixtures,
        checks,
        max_rel_err: max_rel,
        tolerance: TOLERANCE,
    })
}

fn check_generator_loss(
    suite: &'static str,
    seed: u64,
    fixtures: usize,
    value_and_grad: &dyn Fn(&ToyGenerator, &TrainItem) -> Result<(f64, Vec<f64>, f64)>,
) -> Result<GradcheckReport> {
    let dim = 8;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..fixtures {
        let n_candidates = rng.gen_range(2..=6);
        let item = random_train_item(&mut rng, dim, n_candidates);
        let generator = random_generator(&mut rng, dim + 1);
        let (_, grad_w, grad_b) = value_and_grad(&generator, &item)?;
        for i in 0..generator.feature_dim {
            let mut plus = generator.clone();
            plus.score_weights[i] += STEP;
            let mut minus = generator.clone();
            minus.score_weights[i] -= STEP;
            let fd =
                (value_and_grad(&plus, &item)?.0 - value_and_grad(&minus, &item)?.0) / (2.0 * STEP);
            max_rel = max_rel.max(rel_err(grad_w[i], fd));
            checks += 1;
        }
        let mut plus = generator.clone();
        plus.bias += STEP;
        let mut minus = generator.clone();
        minus.bias -= STEP;
        let fd = (value_and_grad(&plus, &item)?.0 - value_and_grad(&minus, &item)?.0) / (2.0 * STEP);
        max_rel = max_rel.max(rel_err(grad_b, fd));
        checks += 1;
    }
    Ok(GradcheckReport {
        suite,
        fixtures,
        checks,
        max_rel_err: max_rel,
        tolerance: TOLERANCE,
    })
}

/// Supervised cross-entropy vs. central differences.
pub fn check_supervised(seed: u64, fixtures: usize) -> Result<GradcheckReport> {
    check_generator_loss("supervised_loss/generator", seed, fixtures, &|g, item| {
        let (value, grads) = supervised_loss(g, item)?;
        Ok((value, grads.weights, grads.bias))
    })
}

/// Teacher-consistency loss vs. central differences.
pub fn check_consistency_teacher(seed: u64, fixtures: usize) -> Result<GradcheckReport> {
    check_generator_loss("consistency_loss/teacher", seed, fixtures, &|g, item| {
        let forward = g.forward(item)?;
        let c = consistency_loss(g, item, &forward, ConsistencyNorm::SquaredL2)?;
        Ok((c.l_cg, c.grad_cg.weights, c.grad_cg.bias))
    })
}

/// Extract-consistency loss vs. central differences.
pub fn check_consistency_extract(seed: u64, fixtures: usize) -> Result<GradcheckReport> {
    check_generator_loss("consistency_loss/extract", seed, fixtures, &|g, item| {
        let forward = g.forward(item)?;
        let c = consistency_loss(g, item, &forward, ConsistencyNorm::SquaredL2)?;
        Ok((c.l_ce, c.grad_ce.weights, c.grad_ce.bias))
    })
}

/// Every suite at its standard size (50 fixtures each).
pub fn run_all(seed: u64) -> Result<Vec<GradcheckReport>> {
    Ok(vec![
        check_contrastive(seed, 50)?,
        check_supervised(seed.wrapping_add(1), 50)?,
        check_consistency_teacher(seed.wrapping_add(2), 50)?,
        check_consistency_extract(seed.wrapping_add(3), 50)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_at_tolerance() {
        for report in run_all(1906).unwrap() {
            assert!(
                report.passed(),
                "{}: max rel err {} > {}",
                report.suite,
                report.max_rel_err,
                report.tolerance
            );
            assert!(report.checks > 0);
        }
    }
}
