//! End-to-end plumbing: linking, vocabulary and feature preparation,
//! entity pretraining and model construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use std::path::Path;

use crate::cache::link_and_build;
use crate::data::{
    build_word_table, parse_dataset, stopwords, to_jsonl, IdfTable, PretrainedVectors, QAInstance,
    RawRecord, SyntheticData, Vocabulary,
};
use crate::entity_graph::DEFAULT_MAX_NEIGHBORS;
use crate::error::Result;
use crate::eval::{evaluate, EvalReport};
use crate::kg::{AliasDictionary, KnowledgeGraph};
use crate::linking::LinkerConfig;
use crate::model::{Model, ModelConfig, PreparedInstance, Preparer, SimKind, Variant};
use crate::train::{train, TrainOptions, TrainOutcome};
use crate::transe::{train_transe, TransEConfig};

/// Train, dev and test splits of one dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

impl Splits<QAInstance> {
    pub fn from_records(
        train: &[RawRecord],
        dev: &[RawRecord],
        test: &[RawRecord],
        max_len: usize,
    ) -> Result<Self> {
        Ok(Splits {
            train: parse_dataset(&to_jsonl(train), max_len, true)?,
            dev: parse_dataset(&to_jsonl(dev), max_len, true)?,
            test: parse_dataset(&to_jsonl(test), max_len, true)?,
        })
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_instances([&self.train[..], &self.dev[..], &self.test[..]])
    }
}

/// Linked splits turned into model inputs, plus the tables they index.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub idf: IdfTable,
    pub linked: Splits<QAInstance>,
    pub splits: Splits<PreparedInstance>,
}

impl Corpus {
    /// Links every split, builds entity graphs against `kg` (through the
    /// cache when given) and prepares model inputs. Overlap IDF comes from
    /// the training split; `vocab` defaults to every token of every split.
    pub fn build(
        mut linked: Splits<QAInstance>,
        kg: &KnowledgeGraph,
        aliases: &AliasDictionary,
        linker: &LinkerConfig,
        vocab: Option<Vocabulary>,
        cache: Option<&Path>,
    ) -> Result<Self> {
        let build = |split: &mut Vec<QAInstance>| {
            link_and_build(split, kg, aliases, linker, DEFAULT_MAX_NEIGHBORS, cache)
        };
        let graphs = Splits {
            train: build(&mut linked.train)?,
            dev: build(&mut linked.dev)?,
            test: build(&mut linked.test)?,
        };
        let vocab = vocab.unwrap_or_else(|| linked.vocabulary());
        let idf = IdfTable::from_instances(&linked.train);
        let stop = stopwords();
        let splits = {
            let preparer = Preparer {
                vocab: &vocab,
                kg,
                idf: &idf,
                stopwords: &stop,
                max_neighbors: DEFAULT_MAX_NEIGHBORS,
            };
            Splits {
                train: preparer.prepare_all(&linked.train, Some(&graphs.train))?,
                dev: preparer.prepare_all(&linked.dev, Some(&graphs.dev))?,
                test: preparer.prepare_all(&linked.test, Some(&graphs.test))?,
            }
        };
        Ok(Corpus {
            vocab,
            idf,
            linked,
            splits,
        })
    }
}

/// Linker settings matching a model configuration.
pub fn linker_for(config: &ModelConfig) -> LinkerConfig {
    LinkerConfig {
        k: config.k,
        ..LinkerConfig::default()
    }
}

/// TransE settings producing `d_k`-wide entity vectors.
pub fn transe_for(config: &ModelConfig) -> TransEConfig {
    TransEConfig {
        dim: config.d_k,
        seed: config.seed,
        ..TransEConfig::default()
    }
}

/// Builds a model whose word rows come from `pretrained` where available.
pub fn build_model(
    config: &ModelConfig,
    vocab: &Vocabulary,
    pretrained: Option<&PretrainedVectors>,
    entities: Tensor,
) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x776f_7264);
    let words = build_word_table(vocab, pretrained, config.word_dim, &mut rng)?;
    Model::new(config.clone(), words, entities)
}

/// One complete synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainOptions,
    pub transe: TransEConfig,
    /// Fraction of KG triples kept before pretraining and graph construction.
    pub kg_keep_ratio: f64,
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig, train: TrainOptions) -> Self {
        let transe = transe_for(&model);
        ExperimentConfig {
            model,
            train,
            transe,
            kg_keep_ratio: 1.0,
        }
    }

    /// Reduced widths, cosine similarity and a longer TransE schedule sized
    /// for the default synthetic benchmark on one CPU core.
    pub fn desk_scale(variant: Variant, seed: u64) -> Self {
        let model = ModelConfig {
            variant,
            d_h: 32,
            hidden_per_dir: 16,
            d_k: 32,
            word_dim: 32,
            n_feature_maps: 32,
            lstm_hidden_final: 32,
            learning_rate: 0.005,
            dropout: 0.1,
            batch_size: 64,
            l2_lambda: 1e-5,
            sim_kind: SimKind::Cosine,
            seed,
            ..ModelConfig::default()
        };
        let mut config = Self::new(
            model,
            TrainOptions {
                max_epochs: 30,
                patience: 10,
                target_loss: None,
            },
        );
        config.transe.epochs = 500;
        config.transe.learning_rate = 0.05;
        config
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: Model,
    pub outcome: TrainOutcome,
    pub test: EvalReport,
    pub n_triples: usize,
}

/// Subsamples the KG, pretrains entity vectors, links, trains on the
/// training split with early stopping on dev, and evaluates on test.
pub fn run_experiment(data: &SyntheticData, config: &ExperimentConfig) -> Result<ExperimentResult> {
    let kg = data.kg.subsample(config.kg_keep_ratio, config.model.seed)?;
    let (entities, _) = train_transe(&kg, &config.transe)?;
    let raw = Splits::from_records(&data.train, &data.dev, &data.test, config.model.max_len)?;
    let corpus = Corpus::build(
        raw,
        &kg,
        &data.aliases,
        &linker_for(&config.model),
        None,
        None,
    )?;
    let mut model = build_model(
        &config.model,
        &corpus.vocab,
        Some(&data.pretrained()),
        entities.entities,
    )?;
    let outcome = train(
        &mut model,
        &corpus.splits.train,
        &corpus.splits.dev,
        &config.train,
    )?;
    let test = evaluate(&model, &corpus.splits.test)?;
    Ok(ExperimentResult {
        model,
        outcome,
        test,
        n_triples: kg.n_triples(),
    })
}
