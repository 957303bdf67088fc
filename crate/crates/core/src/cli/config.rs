//! Run configuration: one TOML file plus `--section.key=value` overrides.
//!
//! Precedence is command line over file over built-in defaults. Unknown keys
//! are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::content_hash;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainOptions;
use crate::transe::TransEConfig;

/// File locations. Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Triples, `head \t relation \t tail` per line.
    pub kg: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    /// TransE table as written by `kge-train`.
    pub entity_embeddings: Option<PathBuf>,
    /// Optional pretrained word vectors, `token v1 ... vd` per line.
    pub word_embeddings: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Unlabeled questions scored by `predict`.
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            kg: None,
            aliases: None,
            entity_embeddings: None,
            word_embeddings: None,
            train: None,
            dev: None,
            test: None,
            input: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fraction of KG triples kept before pretraining, linking and graph
    /// construction.
    pub kg_keep_ratio: f64,
    pub model: ModelConfig,
    pub train: TrainOptions,
    pub transe: TransEConfig,
    pub synthetic: SyntheticSpec,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kg_keep_ratio: 1.0,
            model: ModelConfig::default(),
            train: TrainOptions::default(),
            transe: TransEConfig::default(),
            synthetic: SyntheticSpec::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Top-level keys that may be overridden without a section prefix.
const TOP_LEVEL_KEYS: [&str; 1] = ["kg_keep_ratio"];

/// True for `--key=value` arguments that address a config key rather than a
/// command-line flag: the key is dotted or a top-level config key.
pub fn is_override(arg: &str) -> bool {
    arg.strip_prefix("--")
        .and_then(|rest| rest.split_once('='))
        .is_some_and(|(key, _)| key.contains('.') || TOP_LEVEL_KEYS.contains(&key))
}

/// Reads a value as TOML, falling back to a bare string.
fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// Sets `key` (dotted) in `table`, creating intermediate tables.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut current = table;
    for part in parts {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Merges `overrides` (each `--key=value`) onto the file contents and
    /// fills everything else from defaults.
    pub fn from_sources(file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match file {
            Some(text) => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for arg in overrides {
            let (key, value) = arg
                .strip_prefix("--")
                .and_then(|a| a.split_once('='))
                .ok_or_else(|| Error::Config(format!("override `{arg}` is not --key=value")))?;
            set_path(&mut table, key, parse_value(value))?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (when given) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = path
            .map(|p| {
                require_file(p)?;
                std::fs::read_to_string(p).map_err(|e| Error::io(p, e))
            })
            .transpose()?;
        Self::from_sources(text.as_deref(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kg_keep_ratio > 0.0 && self.kg_keep_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "kg_keep_ratio {} not in (0, 1]",
                self.kg_keep_ratio
            )));
        }
        self.model.validate()?;
        self.transe.validate()
    }

    /// Identity of the model architecture and its training hyperparameters,
    /// recorded in checkpoints.
    pub fn model_hash(&self) -> String {
        let json = serde_json::to_string(&self.model).expect("model config serializes");
        content_hash([json.as_bytes()])
    }

    /// The path stored under `paths.<name>`, which must name an existing file.
    pub fn input(&self, name: &str) -> Result<&Path> {
        let p = self
            .optional_input(name)?
            .ok_or_else(|| Error::Config(format!("paths.{name} is required")))?;
        Ok(p)
    }

    /// Like [`RunConfig::input`] but absent entries are allowed.
    pub fn optional_input(&self, name: &str) -> Result<Option<&Path>> {
        let p = &self.paths;
        let slot = match name {
            "kg" => &p.kg,
            "aliases" => &p.aliases,
            "entity_embeddings" => &p.entity_embeddings,
            "word_embeddings" => &p.word_embeddings,
            "train" => &p.train,
            "dev" => &p.dev,
            "test" => &p.test,
            "input" => &p.input,
            _ => return Err(Error::Config(format!("unknown path `{name}`"))),
        };
        match slot {
            Some(path) => {
                require_file(path)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }
}

pub(crate) fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingInput(path.to_path_buf()))
    }
}
