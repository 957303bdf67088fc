use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "KANN_SELF")]
    KannSelf,
    #[serde(rename = "KANN_CO")]
    KannCo,
    #[serde(rename = "KANN_MULTI")]
    KannMulti,
    #[serde(rename = "CKANN")]
    Ckann,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Knn,
        Variant::KannSelf,
        Variant::KannCo,
        Variant::KannMulti,
        Variant::Ckann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Knn => "KNN",
            Variant::KannSelf => "KANN_SELF",
            Variant::KannCo => "KANN_CO",
            Variant::KannMulti => "KANN_MULTI",
            Variant::Ckann => "CKANN",
        }
    }

    /// Whether knowledge is one entity per mention rather than one slot per token.
    pub fn mention_level(self) -> bool {
        self == Variant::Ckann
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Bilinear,
    Cosine,
    Dot,
    None,
}

impl FromStr for SimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(SimKind::Bilinear),
            "cosine" => Ok(SimKind::Cosine),
            "dot" => Ok(SimKind::Dot),
            "none" => Ok(SimKind::None),
            _ => Err(Error::Config(format!("unknown sim_kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d_h: usize,
    pub hidden_per_dir: usize,
    /// Entity embedding width; must match the embedding table.
    pub d_k: usize,
    /// Word embedding width; must match pretrained vectors when given.
    pub word_dim: usize,
    pub filter_widths: Vec<usize>,
    /// Total knowledge-CNN feature maps for token-aligned variants.
    pub n_feature_maps: usize,
    pub lstm_hidden_final: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub max_len: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub sim_kind: SimKind,
    pub use_overlap_features: bool,
    /// Replaces every knowledge representation with zeros.
    pub ablate_knowledge: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Ckann,
            d_h: 200,
            hidden_per_dir: 100,
            d_k: 64,
            word_dim: 300,
            filter_widths: vec![2, 3],
            n_feature_maps: 200,
            lstm_hidden_final: 200,
            learning_rate: 0.0005,
            dropout: 0.5,
            batch_size: 64,
            l2_lambda: 0.0001,
            max_len: 40,
            k: 5,
            sim_kind: SimKind::Bilinear,
            use_overlap_features: true,
            ablate_knowledge: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_h != 2 * self.hidden_per_dir {
            return bad(format!(
                "d_h ({}) must equal 2 × hidden_per_dir ({})",
                self.d_h, self.hidden_per_dir
            ));
        }
        for (name, v) in [
            ("hidden_per_dir", self.hidden_per_dir),
            ("d_k", self.d_k),
            ("word_dim", self.word_dim),
            ("lstm_hidden_final", self.lstm_hidden_final),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
            ("K", self.k),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return bad("filter_widths must be nonempty and positive".into());
        }
        let n = self.filter_widths.len();
        if !self.knowledge_dim().is_multiple_of(n) || self.knowledge_dim() == 0 {
            return bad(format!(
                "knowledge feature maps ({}) must split evenly over {n} filter widths",
                self.knowledge_dim()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        if self.l2_lambda < 0.0 || self.learning_rate <= 0.0 {
            return bad("l2_lambda must be ≥ 0 and learning_rate > 0".into());
        }
        Ok(())
    }

    /// Width of a knowledge row after the CNN: `d_h` for CKANN, else `n_feature_maps`.
    pub fn knowledge_dim(&self) -> usize {
        if self.variant.mention_level() {
            self.d_h
        } else {
            self.n_feature_maps
        }
    }

    pub fn maps_per_width(&self) -> usize {
        self.knowledge_dim() / self.filter_widths.len()
    }

    /// Width of `s_q` and `s_a`.
    pub fn sentence_dim(&self) -> usize {
        self.d_h + self.knowledge_dim()
    }
}
