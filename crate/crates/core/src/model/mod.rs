//! Knowledge-aware answer-selection networks.
//!
//! Every variant shares a BiLSTM context encoder over word embeddings and a
//! joint layer over `[s_q : sim : s_a : features]`. They differ in how
//! knowledge rows `H_k` are built and how sentence vectors are pooled:
//!
//! | variant      | knowledge rows                         | pooling               |
//! |--------------|----------------------------------------|-----------------------|
//! | `KNN`        | context-guided candidates + CNN        | column max            |
//! | `KANN_SELF`  | context-guided candidates + CNN        | self-attention        |
//! | `KANN_CO`    | context-guided candidates + CNN        | co-attention          |
//! | `KANN_MULTI` | context-guided candidates + CNN        | multi-view attention  |
//! | `CKANN`      | entity-graph GCN + CNN (per mention)   | multi-view attention  |

pub mod attention;
pub mod config;
pub mod fixture;
pub mod inputs;
pub mod knowledge;
pub mod overlap;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::nn::{weight_init, BiLstm, ConvBank, Linear};
use crate::autodiff::{Graph, InitSpec, ParamId, ParamKind, ParamStore, Tensor, Var};
use crate::data::PAD;
use crate::error::{Error, Result};

pub use attention::{CoAttention, Encoded, MultiView, SelfAttention};
pub use config::{ModelConfig, SimKind, Variant};
pub use inputs::{
    sentence_graphs, split_graphs, GraphInput, PreparedCandidate, PreparedInstance, Preparer,
    SentenceInput, SplitGraphs,
};
pub use knowledge::{ContextGuided, Gcn};
pub use overlap::overlap_features;

/// Attention vectors recorded during a forward pass, keyed by view.
pub type AttentionTrace = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub prob: f64,
    pub trace: AttentionTrace,
}

#[derive(Debug, Clone)]
enum KnowledgeModule {
    TokenAligned { guide: ContextGuided, cnn: ConvBank },
    Graph { gcn: Gcn, cnn: ConvBank },
}

#[derive(Debug, Clone)]
enum Pooling {
    Max,
    SelfAttention(SelfAttention),
    CoAttention(CoAttention),
    MultiView(MultiView),
}

#[derive(Debug, Clone)]
pub struct JointLayer {
    pub sim: SimKind,
    pub bilinear: Option<ParamId>,
    pub hidden: Linear,
    pub output: Linear,
    pub use_features: bool,
}

impl JointLayer {
    pub fn new(store: &mut ParamStore, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let d = config.sentence_dim();
        let bilinear = match config.sim_kind {
            SimKind::Bilinear => {
                Some(store.init("joint.sim", d, d, weight_init(), ParamKind::Weight, rng)?)
            }
            _ => None,
        };
        let input = 2 * d
            + usize::from(config.sim_kind != SimKind::None)
            + if config.use_overlap_features { 4 } else { 0 };
        Ok(JointLayer {
            sim: config.sim_kind,
            bilinear,
            hidden: Linear::new(
                store,
                "joint.hidden",
                input,
                config.lstm_hidden_final,
                true,
                rng,
            )?,
            output: Linear::new(
                store,
                "joint.output",
                config.lstm_hidden_final,
                2,
                true,
                rng,
            )?,
            use_features: config.use_overlap_features,
        })
    }

    /// Similarity term between `1 × d` rows; `None` when omitted.
    pub fn similarity(&self, g: &mut Graph, s_q: Var, s_a: Var) -> Result<Option<Var>> {
        if g.shape(s_q) != g.shape(s_a) {
            return Err(Error::DimensionMismatch(format!(
                "s_q is {:?}, s_a is {:?}",
                g.shape(s_q),
                g.shape(s_a)
            )));
        }
        Ok(match self.sim {
            SimKind::Bilinear => {
                let w = g.param(self.bilinear.expect("bilinear weight"));
                let left = g.matmul(s_q, w)?;
                let right = g.transpose(s_a);
                Some(g.matmul(left, right)?)
            }
            SimKind::Cosine => Some(g.cosine(s_q, s_a)?),
            SimKind::Dot => {
                let p = g.mul(s_q, s_a)?;
                Some(g.sum(p))
            }
            SimKind::None => None,
        })
    }

    /// Positive-class probability as a `1 × 1` node.
    pub fn forward(
        &self,
        g: &mut Graph,
        s_q: Var,
        s_a: Var,
        features: &[f64; 4],
        dropout: f64,
    ) -> Result<Var> {
        let mut parts = vec![s_q];
        if let Some(sim) = self.similarity(g, s_q, s_a)? {
            parts.push(sim);
        }
        parts.push(s_a);
        if self.use_features {
            parts.push(g.constant(Tensor::row_vector(features.to_vec())));
        }
        let x = g.concat_cols(&parts)?;
        let x = g.dropout(x, dropout);
        let h = self.hidden.forward(g, x)?;
        let h = g.tanh(h);
        let logits = self.output.forward(g, h)?;
        let p = g.softmax_rows(logits);
        g.slice_cols(p, 1, 1)
    }
}

/// Sum of `λ‖θ‖²` over regularized parameters, as a graph node.
pub fn l2_penalty(g: &mut Graph, lambda: f64) -> Var {
    let ids: Vec<ParamId> = g
        .store()
        .iter()
        .filter(|(_, p)| p.regularized())
        .map(|(id, _)| id)
        .collect();
    let mut total = g.constant(Tensor::scalar(0.0));
    if lambda == 0.0 {
        return total;
    }
    for id in ids {
        let p = g.param(id);
        let s = g.sum_squares(p);
        total = g.add(total, s).expect("scalars");
    }
    g.scale(total, lambda)
}

/// Binary cross-entropy summed over `(probability, label)` pairs.
pub fn data_loss(g: &mut Graph, probs: &[(Var, u8)]) -> Result<Var> {
    let mut total = g.constant(Tensor::scalar(0.0));
    for &(p, y) in probs {
        let l = g.bce(p, f64::from(y));
        total = g.add(total, l)?;
    }
    Ok(total)
}

/// `−Σ [y log p + (1−y) log(1−p)] + λ‖θ‖²` with clamped probabilities.
pub fn loss(g: &mut Graph, probs: &[(Var, u8)], lambda: f64) -> Result<Var> {
    let data = data_loss(g, probs)?;
    let penalty = l2_penalty(g, lambda);
    g.add(data, penalty)
}

/// Loss nodes for one mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    /// Cross-entropy plus the L2 penalty; the training objective.
    pub total: Var,
    /// Cross-entropy alone.
    pub data: Var,
    pub pairs: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub words: ParamId,
    pub entities: ParamId,
    encoder: BiLstm,
    knowledge: KnowledgeModule,
    pooling: Pooling,
    pub joint: JointLayer,
}

impl Model {
    /// Builds a model around a word table (`|V| × word_dim`, row 0 = PAD)
    /// and a frozen entity table (`|E| × d_k`).
    pub fn new(config: ModelConfig, words: Tensor, entities: Tensor) -> Result<Self> {
        config.validate()?;
        if words.cols() != config.word_dim || words.rows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "word table is {}x{}, config expects word_dim {}",
                words.rows(),
                words.cols(),
                config.word_dim
            )));
        }
        if entities.cols() != config.d_k {
            return Err(Error::DimensionMismatch(format!(
                "entity table has dim {}, config expects d_k {}",
                entities.cols(),
                config.d_k
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let mut words = words;
        words.row_mut(PAD).iter_mut().for_each(|x| *x = 0.0);
        let words = store.add("words", words, InitSpec::Given, ParamKind::Embedding)?;
        store.get_mut(words).frozen_rows = vec![PAD];
        let entities = store.add("entities", entities, InitSpec::Given, ParamKind::Frozen)?;

        let (d_h, d_k, d_f) = (config.d_h, config.d_k, config.knowledge_dim());
        let encoder = BiLstm::new(
            &mut store,
            "encoder",
            config.word_dim,
            config.hidden_per_dir,
            &mut rng,
        )?;
        let maps = config.maps_per_width();
        let knowledge = if config.variant.mention_level() {
            KnowledgeModule::Graph {
                gcn: Gcn::new(&mut store, "gcn", d_k, &mut rng)?,
                cnn: ConvBank::new(
                    &mut store,
                    "knowledge_cnn",
                    &config.filter_widths,
                    d_k,
                    maps,
                    &mut rng,
                )?,
            }
        } else {
            KnowledgeModule::TokenAligned {
                guide: ContextGuided::new(&mut store, "context_guided", d_k, d_h, d_h, &mut rng)?,
                cnn: ConvBank::new(
                    &mut store,
                    "knowledge_cnn",
                    &config.filter_widths,
                    d_k,
                    maps,
                    &mut rng,
                )?,
            }
        };
        let pooling = match config.variant {
            Variant::Knn => Pooling::Max,
            Variant::KannSelf => {
                Pooling::SelfAttention(SelfAttention::new(&mut store, d_h, d_f, d_h, &mut rng)?)
            }
            Variant::KannCo => {
                Pooling::CoAttention(CoAttention::new(&mut store, d_h, d_f, &mut rng)?)
            }
            Variant::KannMulti | Variant::Ckann => {
                Pooling::MultiView(MultiView::new(&mut store, d_h, d_f, d_h, &mut rng)?)
            }
        };
        let joint = JointLayer::new(&mut store, &config, &mut rng)?;
        Ok(Model {
            config,
            store,
            words,
            entities,
            encoder,
            knowledge,
            pooling,
            joint,
        })
    }

    /// Context rows `H_w` (`L × d_h`).
    pub fn encode_context(&self, g: &mut Graph, words: &[usize]) -> Result<Var> {
        if words.is_empty() {
            return Err(Error::EmptySentence);
        }
        let x = g.embed(self.words, words.iter().map(|&w| Some(w)).collect())?;
        let x = g.dropout(x, self.config.dropout);
        self.encoder.forward(g, x)
    }

    /// Context and knowledge rows of one sentence.
    pub fn encode(
        &self,
        g: &mut Graph,
        s: &SentenceInput,
        trace: &mut AttentionTrace,
        prefix: &str,
    ) -> Result<Encoded> {
        let h_w = self.encode_context(g, &s.words)?;
        let d_f = self.config.knowledge_dim();
        let h_k = if self.config.ablate_knowledge {
            let rows = if self.config.variant.mention_level() {
                1
            } else {
                s.len()
            };
            g.constant(Tensor::zeros(rows, d_f))
        } else {
            match &self.knowledge {
                KnowledgeModule::TokenAligned { guide, cnn } => {
                    let k = guide.forward(g, h_w, &s.candidates, self.entities, trace, prefix)?;
                    cnn.forward(g, k)?
                }
                KnowledgeModule::Graph { gcn, cnn } => {
                    let e = match &s.graph {
                        Some(graph) => gcn.forward(g, graph, self.entities)?,
                        None => g.constant(Tensor::zeros(1, self.config.d_k)),
                    };
                    cnn.forward(g, e)?
                }
            }
        };
        Ok(Encoded { h_w, h_k })
    }

    /// Sentence vectors `(s_q, s_a)`.
    pub fn pool(
        &self,
        g: &mut Graph,
        q: Encoded,
        a: Encoded,
        trace: &mut AttentionTrace,
    ) -> Result<(Var, Var)> {
        match &self.pooling {
            Pooling::Max => {
                let mut sentence = |e: Encoded| -> Result<Var> {
                    let w = g.max_rows(e.h_w);
                    let k = g.max_rows(e.h_k);
                    g.concat_cols(&[w, k])
                };
                Ok((sentence(q)?, sentence(a)?))
            }
            Pooling::SelfAttention(m) => m.forward(g, q, a, trace),
            Pooling::CoAttention(m) => m.forward(g, q, a, trace),
            Pooling::MultiView(m) => m.forward(g, q, a, trace),
        }
    }

    /// Probability node for one candidate given an encoded question.
    pub fn score(
        &self,
        g: &mut Graph,
        q: Encoded,
        candidate: &PreparedCandidate,
        trace: &mut AttentionTrace,
    ) -> Result<Var> {
        let a = self.encode(g, &candidate.input, trace, "a")?;
        let (s_q, s_a) = self.pool(g, q, a, trace)?;
        self.joint
            .forward(g, s_q, s_a, &candidate.features, self.config.dropout)
    }

    /// Probabilities of every candidate, each with its attention trace.
    pub fn predict(&self, inst: &PreparedInstance) -> Result<Vec<ModelOutput>> {
        let mut g = Graph::new(&self.store);
        let mut q_trace = AttentionTrace::new();
        let q = self.encode(&mut g, &inst.question, &mut q_trace, "q")?;
        inst.candidates
            .iter()
            .map(|c| {
                let mut trace = q_trace.clone();
                let p = self.score(&mut g, q, c, &mut trace)?;
                let prob = g.value(p).item();
                if !prob.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "probability for question {}",
                        inst.qid
                    )));
                }
                Ok(ModelOutput { prob, trace })
            })
            .collect()
    }

    /// Loss over a batch of instances built on `g`. Each question is encoded
    /// once and shared by its candidates.
    pub fn batch_loss(&self, g: &mut Graph, batch: &[&PreparedInstance]) -> Result<BatchLoss> {
        let mut probs = Vec::new();
        let mut trace = AttentionTrace::new();
        for inst in batch {
            let q = self.encode(g, &inst.question, &mut trace, "q")?;
            for c in &inst.candidates {
                probs.push((self.score(g, q, c, &mut trace)?, c.label));
            }
            trace.clear();
        }
        let data = data_loss(g, &probs)?;
        let penalty = l2_penalty(g, self.config.l2_lambda);
        Ok(BatchLoss {
            total: g.add(data, penalty)?,
            data,
            pairs: probs.len(),
        })
    }
}

#[cfg(test)]
mod tests;
