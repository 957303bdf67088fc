//! Subcommand implementations. Every command validates its input paths
//! before doing any work and writes only under `paths.output_dir`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{require_file, RunConfig};
use super::heatmap::{attention_sections, render};
use crate::autodiff::{checkpoint, Tensor};
use crate::cache::{cache_dir_from_env, content_hash};
use crate::data::{
    generate_synthetic, load_dataset, load_unlabeled, PretrainedVectors, QAInstance, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::{score_split, write_run_file, EvalReport};
use crate::kg::{AliasDictionary, KnowledgeGraph};
use crate::model::Model;
use crate::pipeline::{build_model, linker_for, Corpus, Splits};
use crate::train::train as train_model;
use crate::transe::{train_transe, EmbeddingTable};

/// Dataset split selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

/// Files inside a checkpoint directory.
pub const CHECKPOINT_FILES: [&str; 3] = ["manifest", "params.bin", "vocab.txt"];

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn output_dir(config: &RunConfig) -> Result<&Path> {
    let dir = config.paths.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash([bytes.as_slice()]))
}

/// The KG after `kg_keep_ratio` subsampling, seeded by the model seed.
fn load_kg(config: &RunConfig, path: &Path) -> Result<(KnowledgeGraph, usize)> {
    let full = KnowledgeGraph::load(path)?;
    let kept = full.subsample(config.kg_keep_ratio, config.model.seed)?;
    Ok((kept, full.n_triples()))
}

fn checkpoint_dir(config: &RunConfig, given: Option<&Path>) -> Result<PathBuf> {
    let dir = given.map_or_else(
        || config.paths.output_dir.join("checkpoint"),
        Path::to_path_buf,
    );
    for name in CHECKPOINT_FILES {
        require_file(&dir.join(name))?;
    }
    Ok(dir)
}

/// Rebuilds the trained model stored in `dir`. Fails with `ConfigMismatch`
/// when the checkpoint was written for a different model configuration.
fn restore(config: &RunConfig, dir: &Path, n_entities: usize) -> Result<(Model, Vocabulary)> {
    let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
    let m = &config.model;
    let mut model = Model::new(
        m.clone(),
        Tensor::zeros(vocab.len(), m.word_dim),
        Tensor::zeros(n_entities, m.d_k),
    )?;
    checkpoint::load(
        &mut model.store,
        &config.model_hash(),
        &dir.join("manifest"),
        &dir.join("params.bin"),
    )?;
    Ok((model, vocab))
}

fn check_hash(config: &RunConfig, dir: &Path) -> Result<()> {
    let recorded = checkpoint::read_config_hash(&dir.join("manifest"))?;
    let current = config.model_hash();
    if recorded != current {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint {} was written for model config {recorded}, current config is {current}",
            dir.display()
        )));
    }
    Ok(())
}

fn build_corpus(
    config: &RunConfig,
    kg: &KnowledgeGraph,
    aliases: &AliasDictionary,
    linked: Splits<QAInstance>,
    vocab: Option<Vocabulary>,
) -> Result<Corpus> {
    let cache = cache_dir_from_env();
    Corpus::build(
        linked,
        kg,
        aliases,
        &linker_for(&config.model),
        vocab,
        cache.as_deref(),
    )
}

/// Writes the synthetic benchmark files into the output directory.
pub fn gen_synthetic(config: &RunConfig) -> Result<()> {
    let data = generate_synthetic(&config.synthetic)?;
    let dir = output_dir(config)?;
    data.write(dir)?;
    eprintln!(
        "wrote {} train / {} dev / {} test questions and {} triples to {}",
        data.train.len(),
        data.dev.len(),
        data.test.len(),
        data.kg.n_triples(),
        dir.display()
    );
    Ok(())
}

/// Trains TransE on the (subsampled) KG; writes `embeddings.txt` and
/// `transe_loss.tsv`.
pub fn kge_train(config: &RunConfig) -> Result<()> {
    let kg_path = config.input("kg")?;
    let dir = output_dir(config)?;
    let (kg, _) = load_kg(config, kg_path)?;
    let (table, trace) = train_transe(&kg, &config.transe)?;
    if let Some(l) = trace.epoch_loss.iter().find(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("TransE loss {l}")));
    }
    table.save(&dir.join("embeddings.txt"))?;
    let mut log = String::from("epoch\tloss\n");
    for (epoch, loss) in trace.epoch_loss.iter().enumerate() {
        let _ = writeln!(log, "{epoch}\t{loss}");
    }
    write(&dir.join("transe_loss.tsv"), &log)?;
    eprintln!(
        "trained {} entity vectors over {} triples for {} epochs",
        kg.n_entities(),
        kg.n_triples(),
        trace.epoch_loss.len()
    );
    Ok(())
}

fn report_json(r: &Option<EvalReport>) -> serde_json::Value {
    serde_json::to_value(r).expect("report serializes")
}

/// Trains the configured model with early stopping on dev MAP and writes
/// the best checkpoint, `metrics.tsv` and `run_manifest.json`.
pub fn train(config: &RunConfig) -> Result<()> {
    let kg_path = config.input("kg")?;
    let aliases_path = config.input("aliases")?;
    let emb_path = config.input("entity_embeddings")?;
    let words_path = config.optional_input("word_embeddings")?;
    let train_path = config.input("train")?;
    let dev_path = config.input("dev")?;
    let test_path = config.optional_input("test")?;
    let dir = output_dir(config)?;

    let (kg, n_full) = load_kg(config, kg_path)?;
    let aliases = AliasDictionary::load(aliases_path, &kg)?;
    let entities = EmbeddingTable::load(emb_path, &kg)?.entities;
    let words = words_path.map(PretrainedVectors::load).transpose()?;
    let max_len = config.model.max_len;
    let linked = Splits {
        train: load_dataset(train_path, max_len)?,
        dev: load_dataset(dev_path, max_len)?,
        test: test_path
            .map(|p| load_dataset(p, max_len))
            .transpose()?
            .unwrap_or_default(),
    };
    let corpus = build_corpus(config, &kg, &aliases, linked, None)?;
    let mut model = build_model(&config.model, &corpus.vocab, words.as_ref(), entities)?;
    let outcome = train_model(
        &mut model,
        &corpus.splits.train,
        &corpus.splits.dev,
        &config.train,
    )?;

    let hash = config.model_hash();
    let ckpt = dir.join("checkpoint");
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    checkpoint::save(
        &model.store,
        &hash,
        &ckpt.join("manifest"),
        &ckpt.join("params.bin"),
    )?;
    corpus.vocab.save(&ckpt.join("vocab.txt"))?;

    let mut metrics =
        String::from("epoch\ttrain_loss\tdev_map\tdev_mrr\tdev_p_at_1\tbest_dev_map\n");
    let na = |v: Option<f64>| v.map_or("NA".to_string(), |v| v.to_string());
    for r in &outcome.history {
        let _ = writeln!(
            metrics,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.epoch,
            r.train_loss,
            na(r.dev.map(|d| d.map)),
            na(r.dev.map(|d| d.mrr)),
            na(r.dev.map(|d| d.p_at_1)),
            na(r.best_dev_map)
        );
        eprintln!(
            "epoch {:>3}  loss {:.5}  dev MAP {}",
            r.epoch,
            r.train_loss,
            na(r.dev.map(|d| d.map))
        );
    }
    write(&dir.join("metrics.tsv"), &metrics)?;

    let mut datasets = serde_json::Map::new();
    for (name, path) in [
        ("kg", Some(kg_path)),
        ("aliases", Some(aliases_path)),
        ("entity_embeddings", Some(emb_path)),
        ("word_embeddings", words_path),
        ("train", Some(train_path)),
        ("dev", Some(dev_path)),
        ("test", test_path),
    ] {
        if let Some(p) = path {
            datasets.insert(name.into(), file_hash(p)?.into());
        }
    }
    let epochs: Vec<serde_json::Value> = outcome
        .history
        .iter()
        .map(|r| {
            json!({
                "epoch": r.epoch,
                "train_loss": r.train_loss,
                "dev": report_json(&r.dev),
                "best_dev_map": r.best_dev_map,
            })
        })
        .collect();
    let manifest = json!({
        "config": config,
        "config_hash": hash,
        "seed": config.model.seed,
        "dataset_hashes": datasets,
        "kg_keep_ratio": config.kg_keep_ratio,
        "n_triples_full": n_full,
        "n_triples": kg.n_triples(),
        "best_epoch": outcome.best_epoch,
        "best_dev": report_json(&outcome.best_dev),
        "epochs": epochs,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&dir.join("run_manifest.json"), &text)?;
    eprintln!(
        "best epoch {} of {}; checkpoint in {}",
        outcome.best_epoch,
        outcome.history.len(),
        ckpt.display()
    );
    Ok(())
}

/// Shared setup of the checkpoint-reading commands: loads the KG, aliases
/// and training split (whose IDF table the overlap features use), plus
/// `extra` as the test split.
fn scoring_corpus(
    config: &RunConfig,
    dir: &Path,
    extra: Vec<QAInstance>,
    extra_is_train: bool,
) -> Result<(Model, Corpus, KnowledgeGraph)> {
    let kg_path = config.input("kg")?;
    let aliases_path = config.input("aliases")?;
    let train_path = config.input("train")?;
    check_hash(config, dir)?;
    let (kg, _) = load_kg(config, kg_path)?;
    let aliases = AliasDictionary::load(aliases_path, &kg)?;
    let (model, vocab) = restore(config, dir, kg.n_entities())?;
    let train = if extra_is_train {
        extra.clone()
    } else {
        load_dataset(train_path, config.model.max_len)?
    };
    let linked = Splits {
        train,
        dev: Vec::new(),
        test: extra,
    };
    let corpus = build_corpus(config, &kg, &aliases, linked, Some(vocab))?;
    Ok((model, corpus, kg))
}

fn split_path(config: &RunConfig, split: SplitName) -> Result<&Path> {
    config.input(split.as_str())
}

/// Scores `split` with a checkpoint; writes `eval_<split>.json` and the
/// run file `run_<split>.tsv`.
pub fn evaluate(config: &RunConfig, checkpoint: Option<&Path>, split: SplitName) -> Result<()> {
    let dir = checkpoint_dir(config, checkpoint)?;
    let path = split_path(config, split)?;
    config.input("train")?;
    let out = output_dir(config)?;
    let data = load_dataset(path, config.model.max_len)?;
    let (model, corpus, _) = scoring_corpus(config, &dir, data, split == SplitName::Train)?;
    let scores = score_split(&model, &corpus.splits.test)?;
    let report = EvalReport::from_scores(&scores);
    let name = split.as_str();
    write(&out.join(format!("eval_{name}.json")), &report.to_json())?;
    write_run_file(&out.join(format!("run_{name}.tsv")), &scores)?;
    print!("{}", report.to_json());
    Ok(())
}

/// Scores the unlabeled `paths.input`; writes `predictions.tsv`.
pub fn predict(config: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let dir = checkpoint_dir(config, checkpoint)?;
    let input = config.input("input")?;
    config.input("train")?;
    let out = output_dir(config)?;
    let data = load_unlabeled(input, config.model.max_len)?;
    let (model, corpus, _) = scoring_corpus(config, &dir, data, false)?;
    let scores = score_split(&model, &corpus.splits.test)?;
    let mut text = String::from("qid\tcand\tscore\n");
    for q in &scores {
        for (i, s) in q.scores.iter().enumerate() {
            let _ = writeln!(text, "{}\t{i}\t{s:.17e}", q.qid);
        }
    }
    let path = out.join("predictions.tsv");
    write(&path, &text)?;
    eprintln!("scored {} questions into {}", scores.len(), path.display());
    Ok(())
}

/// File-name-safe form of a question id.
fn file_stem(qid: &str) -> String {
    qid.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Renders the attention weights of question `qid` in `split` to
/// `attention_<qid>.html`.
pub fn visualize(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    qid: &str,
    split: SplitName,
) -> Result<PathBuf> {
    let dir = checkpoint_dir(config, checkpoint)?;
    let path = split_path(config, split)?;
    config.input("train")?;
    let out = output_dir(config)?;
    let data = load_dataset(path, config.model.max_len)?;
    let index = data
        .iter()
        .position(|q| q.qid == qid)
        .ok_or_else(|| Error::UnknownQid(qid.to_string()))?;
    let single = vec![data[index].clone()];
    let (model, corpus, kg) = scoring_corpus(config, &dir, single, false)?;
    let (linked, prepared) = (&corpus.linked.test[0], &corpus.splits.test[0]);
    let outputs = model.predict(prepared)?;
    let sections = attention_sections(linked, prepared, &outputs, &kg);
    let title = format!(
        "Attention weights ({}) for question {qid}: {}",
        config.model.variant,
        linked.question.join(" ")
    );
    let html = render(&title, &sections)?;
    let target = out.join(format!("attention_{}.html", file_stem(qid)));
    write(&target, &html)?;
    eprintln!("wrote {}", target.display());
    Ok(target)
}
