//! Synthetic fixtures: a planted-signal retrieval task for end-to-end
//! selector training checks, and a sized corpus for compression-ratio
//! accounting.
//!
//! The planted task pairs a small set of query types with matching marker
//! sentences. Under the hash encoder the base similarity between a query
//! and its marker is uninformative, but a linear adapter can align the
//! fixed (query, marker) embedding pairs, so trained top-1 retrieval
//! accuracy separates cleanly from the untrained identity adapter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::contrastive::ContrastiveExample;
use crate::data::TrainingExample;
use crate::embedding::{AdapterMatrix, EncoderBackend};
use crate::error::Result;
use crate::selector::select_sentences;
use crate::textkit::{Segmenter, Sentence};

const CHANNEL_NAMES: [&str; 8] = [
    "zephyr", "quartz", "falcon", "ember", "lagoon", "cobalt", "truffle", "meridian",
];

const CODE_WORDS: [&str; 8] = [
    "kestrel", "obsidian", "viola", "tamarind", "juniper", "basalt", "saffron", "nimbus",
];

/// One synthetic example: a query, a single doc whose sentences include
/// the planted marker, and the ready-made contrastive example.
#[derive(Debug, Clone)]
pub struct PlantedExample {
    pub query: String,
    pub docs: Vec<String>,
    pub planted: String,
    pub contrastive: ContrastiveExample,
}

#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub examples: Vec<PlantedExample>,
    pub n_sentences_per_doc: usize,
}

fn distractor_pool() -> Vec<String> {
    (0..40)
        .map(|j| {
            format!(
                "Archive shelf {j} holds ledger volume {} in the cold room.",
                (j * 7) % 31
            )
        })
        .collect()
}

/// Build `n_examples` planted-retrieval examples over 8 query types and a
/// 40-sentence distractor pool; each doc carries the type's marker plus 4
/// seeded distractors in shuffled order.
pub fn planted_fixture(seed: u64, n_examples: usize) -> PlantedFixture {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pool = distractor_pool();
    let n_distractors = 4;
    let mut examples = Vec::with_capacity(n_examples);

    for i in 0..n_examples {
        let t = i % CHANNEL_NAMES.len();
        let query = format!(
            "Which marker code belongs to channel {}?",
            CHANNEL_NAMES[t]
        );
        let planted = format!(
            "The marker code for channel {} is {}.",
            CHANNEL_NAMES[t], CODE_WORDS[t]
        );

        // Sample distinct distractors.
        let mut picks: Vec<usize> = (0..pool.len()).collect();
        for k in 0..n_distractors {
            let j = k + rng.gen_range(0..pool.len() - k);
            picks.swap(k, j);
        }
        let mut sentences: Vec<String> = picks[..n_distractors]
            .iter()
            .map(|&j| pool[j].clone())
            .collect();
        let planted_pos = rng.gen_range(0..=sentences.len());
        sentences.insert(planted_pos, planted.clone());
        let doc = sentences.join(" ");

        let as_sentence = |pos: usize, text: &str| Sentence {
            text: text.to_string(),
            doc_id: "0".to_string(),
            index: pos,
        };
        let contrastive = ContrastiveExample {
            query: query.clone(),
            positive: as_sentence(planted_pos, &planted),
            semi_positives: vec![],
            negatives: sentences
                .iter()
                .enumerate()
                .filter(|&(pos, _)| pos != planted_pos)
                .map(|(pos, text)| as_sentence(pos, text))
                .collect(),
        };

        examples.push(PlantedExample {
            query,
            docs: vec![doc],
            planted,
            contrastive,
        });
    }

    PlantedFixture {
        examples,
        n_sentences_per_doc: n_distractors + 1,
    }
}

/// Fraction of examples whose top-1 selected sentence is the planted one.
pub fn planted_accuracy(
    encoder: &EncoderBackend,
    adapter: &AdapterMatrix,
    fixture: &PlantedFixture,
    segmenter: &Segmenter,
) -> Result<f64> {
    let mut hits = 0usize;
    for example in &fixture.examples {
        let top = select_sentences(encoder, adapter, &example.query, &example.docs, 1, segmenter)?;
        if top[0].text == example.planted {
            hits += 1;
        }
    }
    Ok(hits as f64 / fixture.examples.len() as f64)
}

const FILLER_WORDS: [&str; 16] = [
    "granite", "meadow", "copper", "harbor", "signal", "lantern", "willow", "summit",
    "drift", "hollow", "timber", "prairie", "anchor", "breeze", "canyon", "orchard",
];

/// A deterministic corpus for token accounting: each example carries
/// `docs_per` docs of `sentences_per_doc` sentences, each about
/// `words_per_sentence` word tokens long.
pub fn ratio_corpus(
    seed: u64,
    n_examples: usize,
    docs_per: usize,
    sentences_per_doc: usize,
    words_per_sentence: usize,
) -> Vec<TrainingExample> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n_examples)
        .map(|i| {
            let docs: Vec<String> = (0..docs_per)
                .map(|d| {
                    (0..sentences_per_doc)
                        .map(|s| {
                            let mut words: Vec<String> = (0..words_per_sentence.saturating_sub(2))
                                .map(|_| {
                                    FILLER_WORDS[rng.gen_range(0..FILLER_WORDS.len())].to_string()
                                })
                                .collect();
                            words.insert(0, format!("Passage {d}x{s}"));
                            format!("{}.", words.join(" "))
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            TrainingExample::new(format!("ratio-{i}"), format!("query about topic {i}"), vec![
                "unused".to_string(),
            ])
            .with_docs(docs)
        })
        .collect()
}
