use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    Uniform(f64, f64),
    /// Uniform in `±sqrt(6 / (rows + cols))`.
    Glorot,
    Zeros,
    /// Value supplied by the caller (pretrained tables).
    Given,
}

/// How a parameter participates in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Dense weight: trained and L2-regularized.
    Weight,
    /// Lookup table: trained, never regularized.
    Embedding,
    /// Never updated.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub init: InitSpec,
    pub kind: ParamKind,
    /// Rows whose gradient is always discarded (e.g. the PAD word row).
    pub frozen_rows: Vec<usize>,
}

impl Parameter {
    pub fn trainable(&self) -> bool {
        self.kind != ParamKind::Frozen
    }

    pub fn regularized(&self) -> bool {
        self.kind == ParamKind::Weight
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub const fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(
        &mut self,
        name: &str,
        value: Tensor,
        init: InitSpec,
        kind: ParamKind,
    ) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            init,
            kind,
            frozen_rows: Vec::new(),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Adds a weight initialized per `init`.
    pub fn init(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: InitSpec,
        kind: ParamKind,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let value = match init {
            InitSpec::Uniform(lo, hi) => {
                let data = (0..rows * cols).map(|_| rng.gen_range(lo..=hi)).collect();
                Tensor::from_vec(rows, cols, data)?
            }
            InitSpec::Glorot => {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                let data = (0..rows * cols)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect();
                Tensor::from_vec(rows, cols, data)?
            }
            InitSpec::Zeros | InitSpec::Given => Tensor::zeros(rows, cols),
        };
        self.add(name, value, init, kind)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar values across all parameters.
    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Snapshot of all values, in parameter order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor]) {
        assert_eq!(values.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v.clone();
        }
    }
}
