//! The frozen tiny configuration used by gradient and normalization checks.
//!
//! Twelve words, seven entities on a four-edge KG and dimensions small
//! enough that a full finite-difference sweep over every parameter of every
//! variant runs in about a second.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    GraphInput, Model, ModelConfig, PreparedCandidate, PreparedInstance, SentenceInput, Variant,
};
use crate::autodiff::{grad_check_params, Tensor};
use crate::entity_graph::{build_variants, DEFAULT_MAX_NEIGHBORS};
use crate::error::Result;
use crate::kg::{EntityId, KnowledgeGraph};

pub const N_WORDS: usize = 12;
pub const N_ENTITIES: usize = 7;

/// Central-difference step for full-model checks. Larger steps cross
/// max-pool kinks; smaller ones lose tiny word gradients to roundoff.
pub const GRAD_STEP: f64 = 1e-4;

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        d_h: 8,
        hidden_per_dir: 4,
        d_k: 6,
        word_dim: 5,
        filter_widths: vec![2, 3],
        n_feature_maps: 4,
        lstm_hidden_final: 5,
        k: 2,
        dropout: 0.0,
        l2_lambda: 1e-3,
        seed: 11,
        ..ModelConfig::default()
    }
}

/// Uniform in `[−0.5, 0.5)`.
pub fn random_table(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches data")
}

pub fn tiny_model(config: ModelConfig) -> Model {
    let (w, k) = (config.word_dim, config.d_k);
    Model::new(
        config,
        random_table(N_WORDS, w, 1),
        random_table(N_ENTITIES, k, 2),
    )
    .expect("tiny configuration is valid")
}

pub fn small_kg() -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for i in 0..N_ENTITIES {
        kg.add_entity(&format!("e{i}"));
    }
    kg.insert("e0", "r", "e1");
    kg.insert("e1", "r", "e4");
    kg.insert("e2", "r", "e5");
    kg.insert("e3", "r", "e6");
    kg
}

/// A sentence of `words` with the given candidate slots and a mention-level
/// graph over `mentions` in [`small_kg`].
pub fn sentence(
    words: &[usize],
    candidates: Vec<Option<Vec<Option<usize>>>>,
    mentions: &[u32],
) -> SentenceInput {
    let kg = small_kg();
    let graph = (!mentions.is_empty()).then(|| {
        let ids: Vec<EntityId> = mentions.iter().map(|&m| EntityId(m)).collect();
        let graphs = build_variants(&ids, &kg, DEFAULT_MAX_NEIGHBORS).expect("ids are in the KG");
        GraphInput::from_graphs(&graphs, N_ENTITIES).expect("variants share nodes")
    });
    SentenceInput {
        words: words.to_vec(),
        candidates,
        graph,
    }
}

/// One question with a knowledge-rich positive and a knowledge-free negative.
pub fn tiny_instance() -> PreparedInstance {
    let question = sentence(
        &[2, 3, 4, 5],
        vec![
            Some(vec![Some(0), Some(1)]),
            None,
            Some(vec![Some(2), None]),
            Some(vec![Some(3), Some(0)]),
        ],
        &[0, 2, 3],
    );
    let pos = sentence(
        &[6, 7, 3],
        vec![None, Some(vec![Some(1), Some(4)]), None],
        &[1, 4, 5],
    );
    let neg = sentence(&[8, 9, 10, 11], vec![None, None, None, None], &[]);
    PreparedInstance {
        qid: "q0".into(),
        question,
        candidates: vec![
            PreparedCandidate {
                input: pos,
                features: [0.25, 0.4, 0.0, 0.1],
                label: 1,
            },
            PreparedCandidate {
                input: neg,
                features: [0.0, 0.0, 0.5, 0.2],
                label: 0,
            },
        ],
    }
}

/// A random sentence of 1 to 8 tokens: each token is a mention with
/// probability one half, and mention slots may be NULL.
pub fn random_sentence(rng: &mut impl Rng, k: usize) -> SentenceInput {
    let len = rng.gen_range(1..=8);
    let words: Vec<usize> = (0..len).map(|_| rng.gen_range(2..N_WORDS)).collect();
    let mut mentions = Vec::new();
    let candidates = (0..len)
        .map(|_| {
            rng.gen_bool(0.5).then(|| {
                let slots: Vec<Option<usize>> = (0..k)
                    .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..N_ENTITIES)))
                    .collect();
                if let Some(Some(top)) = slots.first() {
                    mentions.push(*top as u32);
                }
                slots
            })
        })
        .collect();
    sentence(&words, candidates, &mentions)
}

/// A question with 1 to 4 random candidates, the first one positive.
pub fn random_instance(rng: &mut impl Rng, k: usize) -> PreparedInstance {
    let question = random_sentence(rng, k);
    let n = rng.gen_range(1..=4);
    let candidates = (0..n)
        .map(|i| PreparedCandidate {
            input: random_sentence(rng, k),
            features: [(); 4].map(|_| rng.gen_range(0.0..1.0)),
            label: u8::from(i == 0),
        })
        .collect();
    PreparedInstance {
        qid: "random".into(),
        question,
        candidates,
    }
}

/// Largest relative error between reverse-mode and central-difference
/// gradients of the full loss on [`tiny_instance`], over every trainable
/// coordinate of the tiny model for `variant`.
pub fn full_loss_grad_error(variant: Variant) -> Result<f64> {
    let inst = tiny_instance();
    let mut model = tiny_model(tiny_config(variant));
    let m = model.clone();
    grad_check_params(
        &mut model.store,
        |g| Ok(m.batch_loss(g, &[&inst])?.total),
        GRAD_STEP,
    )
}
