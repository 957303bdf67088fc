//! Token vocabulary and word-embedding tables.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;

use super::dataset::QAInstance;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const OOV: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const OOV_TOKEN: &str = "<oov>";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved PAD and OOV rows.
    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_TOKEN);
        v.push(OOV_TOKEN);
        v
    }

    fn push(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    /// Collects every token of the given instances, in sorted order.
    pub fn from_instances<'a>(splits: impl IntoIterator<Item = &'a [QAInstance]>) -> Self {
        let mut words = BTreeSet::new();
        for split in splits {
            for inst in split {
                words.extend(inst.question.iter().cloned());
                for c in &inst.candidates {
                    words.extend(c.tokens.iter().cloned());
                }
            }
        }
        Self::from_tokens(words.iter().map(String::as_str))
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        for t in tokens {
            v.push(t);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// One token per line, in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(PAD_TOKEN) || lines.next() != Some(OOV_TOKEN) {
            return Err(Error::Format(format!(
                "{} is not a vocabulary file",
                path.display()
            )));
        }
        Ok(Self::from_tokens(lines))
    }
}

/// Pretrained vectors in the `token v1 ... vd` text format.
#[derive(Debug, Clone, Default)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = PretrainedVectors::default();
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Format(format!("embedding line {}: bad value `{f}`", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if out.dim == 0 {
                out.dim = values.len();
            }
            if values.len() != out.dim || out.dim == 0 {
                return Err(Error::Format(format!(
                    "embedding line {} has {} values, expected {}",
                    i + 1,
                    values.len(),
                    out.dim
                )));
            }
            out.vectors.insert(token.to_string(), values);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text<'a>(rows: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
        let mut out = String::new();
        for (token, values) in rows {
            out.push_str(token);
            for v in values {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the `|V| × dim` table: PAD is zero, pretrained tokens copy their
/// vectors and every other row (OOV included) is uniform in `[−0.1, 0.1]`.
pub fn build_word_table(
    vocab: &Vocabulary,
    pretrained: Option<&PretrainedVectors>,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if let Some(p) = pretrained {
        if p.dim != dim && !p.vectors.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "pretrained vectors have dim {}, model expects {dim}",
                p.dim
            )));
        }
    }
    let mut table = Tensor::zeros(vocab.len(), dim);
    for id in 1..vocab.len() {
        let row = table.row_mut(id);
        match pretrained.and_then(|p| p.vectors.get(vocab.token(id))) {
            Some(v) => row.copy_from_slice(v),
            None => row.iter_mut().for_each(|x| *x = rng.gen_range(-0.1..=0.1)),
        }
    }
    Ok(table)
}
