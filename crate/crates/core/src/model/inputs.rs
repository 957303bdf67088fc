//! Index-level model inputs derived from linked instances.

use std::collections::HashSet;

use crate::autodiff::Tensor;
use crate::data::{IdfTable, QAInstance, Vocabulary};
use crate::entity_graph::{build_variants, normalized_operator, EntityGraph};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::linking::KnowledgeSequence;

use super::overlap::overlap_features;

/// Entity-graph operators for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    /// Entity-table row of every node; `None` embeds as zeros.
    pub nodes: Vec<Option<usize>>,
    pub n_original: usize,
    /// Operators for the window-2, window-3 and whole-sentence graphs.
    pub operators: [Tensor; 3],
}

impl GraphInput {
    /// Checks that the three graphs share one node list and builds operators.
    pub fn from_graphs(graphs: &[EntityGraph; 3], n_entities: usize) -> Result<Self> {
        let nodes = graphs[0].node_entities();
        if graphs
            .iter()
            .any(|g| g.node_entities() != nodes || g.n_original() != graphs[0].n_original())
        {
            return Err(Error::NodeSetMismatch);
        }
        Ok(GraphInput {
            nodes: nodes
                .iter()
                .map(|e| (e.index() < n_entities).then_some(e.index()))
                .collect(),
            n_original: graphs[0].n_original(),
            operators: [
                normalized_operator(&graphs[0]),
                normalized_operator(&graphs[1]),
                normalized_operator(&graphs[2]),
            ],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceInput {
    pub words: Vec<usize>,
    /// Per token: entity-table rows of the K candidate slots, or `None`
    /// outside any mention.
    pub candidates: Vec<Option<Vec<Option<usize>>>>,
    /// Mention-level graph; `None` for sentences without mentions.
    pub graph: Option<GraphInput>,
}

impl SentenceInput {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Builds inputs, constructing the entity graphs from `kg` when given.
    pub fn new(
        tokens: &[String],
        knowledge: &KnowledgeSequence,
        vocab: &Vocabulary,
        kg: Option<&KnowledgeGraph>,
        max_neighbors: usize,
    ) -> Result<Self> {
        let graphs = match kg {
            Some(kg) => sentence_graphs(knowledge, kg, max_neighbors)?,
            None => None,
        };
        Self::from_parts(
            tokens,
            knowledge,
            vocab,
            graphs.as_ref(),
            kg.map_or(0, KnowledgeGraph::n_entities),
        )
    }

    /// Builds inputs around precomputed entity graphs.
    pub fn from_parts(
        tokens: &[String],
        knowledge: &KnowledgeSequence,
        vocab: &Vocabulary,
        graphs: Option<&[EntityGraph; 3]>,
        n_entities: usize,
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        let candidates = (0..tokens.len())
            .map(|t| {
                if t >= knowledge.len() {
                    return None;
                }
                knowledge
                    .at(t)
                    .map(|set| set.entities().map(|e| e.map(|e| e.index())).collect())
            })
            .collect();
        let graph = graphs
            .map(|g| GraphInput::from_graphs(g, n_entities))
            .transpose()?;
        Ok(SentenceInput {
            words: vocab.ids(tokens),
            candidates,
            graph,
        })
    }
}

/// The three window graphs of a sentence; `None` without mentions.
pub fn sentence_graphs(
    knowledge: &KnowledgeSequence,
    kg: &KnowledgeGraph,
    max_neighbors: usize,
) -> Result<Option<[EntityGraph; 3]>> {
    if knowledge.mention_level.is_empty() {
        return Ok(None);
    }
    build_variants(&knowledge.mention_level, kg, max_neighbors).map(Some)
}

/// Entity graphs per instance, question first, then each candidate.
pub type SplitGraphs = Vec<Vec<Option<[EntityGraph; 3]>>>;

/// Builds the graphs of every sentence in a linked split.
pub fn split_graphs(
    split: &[QAInstance],
    kg: &KnowledgeGraph,
    max_neighbors: usize,
) -> Result<SplitGraphs> {
    split
        .iter()
        .map(|inst| {
            std::iter::once(&inst.question_knowledge)
                .chain(inst.candidates.iter().map(|c| &c.knowledge))
                .map(|k| sentence_graphs(k, kg, max_neighbors))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCandidate {
    pub input: SentenceInput,
    pub features: [f64; 4],
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInstance {
    pub qid: String,
    pub question: SentenceInput,
    pub candidates: Vec<PreparedCandidate>,
}

impl PreparedInstance {
    pub fn labels(&self) -> Vec<u8> {
        self.candidates.iter().map(|c| c.label).collect()
    }
}

/// Everything needed to turn linked instances into model inputs.
pub struct Preparer<'a> {
    pub vocab: &'a Vocabulary,
    pub kg: &'a KnowledgeGraph,
    pub idf: &'a IdfTable,
    pub stopwords: &'a HashSet<String>,
    pub max_neighbors: usize,
}

impl Preparer<'_> {
    /// Prepares one instance; `graphs` holds its precomputed sentence graphs.
    pub fn prepare(
        &self,
        inst: &QAInstance,
        graphs: Option<&[Option<[EntityGraph; 3]>]>,
    ) -> Result<PreparedInstance> {
        if graphs.is_some_and(|g| g.len() != inst.candidates.len() + 1) {
            return Err(Error::Format(format!(
                "cached graphs do not match question {}",
                inst.qid
            )));
        }
        let n_entities = self.kg.n_entities();
        let sentence = |i: usize, tokens: &[String], knowledge: &KnowledgeSequence| match graphs {
            Some(g) => {
                SentenceInput::from_parts(tokens, knowledge, self.vocab, g[i].as_ref(), n_entities)
            }
            None => SentenceInput::new(
                tokens,
                knowledge,
                self.vocab,
                Some(self.kg),
                self.max_neighbors,
            ),
        };
        let question = sentence(0, &inst.question, &inst.question_knowledge)?;
        let candidates = inst
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(PreparedCandidate {
                    input: sentence(i + 1, &c.tokens, &c.knowledge)?,
                    features: overlap_features(&inst.question, &c.tokens, self.idf, self.stopwords),
                    label: c.label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(PreparedInstance {
            qid: inst.qid.clone(),
            question,
            candidates,
        })
    }

    pub fn prepare_all(
        &self,
        split: &[QAInstance],
        graphs: Option<&SplitGraphs>,
    ) -> Result<Vec<PreparedInstance>> {
        if graphs.is_some_and(|g| g.len() != split.len()) {
            return Err(Error::Format("graph cache does not match the split".into()));
        }
        split
            .iter()
            .enumerate()
            .map(|(i, q)| self.prepare(q, graphs.map(|g| g[i].as_slice())))
            .collect()
    }
}
