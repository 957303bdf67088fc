//! Knowledge modules: context-guided candidate attention and the entity-graph GCN.

use rand::Rng;

use crate::autodiff::nn::weight_init;
use crate::autodiff::{Graph, ParamId, ParamKind, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

use super::inputs::GraphInput;
use super::AttentionTrace;

/// Attention over the K candidate entities of each token, guided by the
/// token's context vector.
#[derive(Debug, Clone)]
pub struct ContextGuided {
    pub w_em: ParamId,
    pub w_hm: ParamId,
    pub w_m: ParamId,
}

impl ContextGuided {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_k: usize,
        d_h: usize,
        attn: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(ContextGuided {
            w_em: store.init(
                &format!("{name}.w_em"),
                d_k,
                attn,
                weight_init(),
                ParamKind::Weight,
                rng,
            )?,
            w_hm: store.init(
                &format!("{name}.w_hm"),
                d_h,
                attn,
                weight_init(),
                ParamKind::Weight,
                rng,
            )?,
            w_m: store.init(
                &format!("{name}.w_m"),
                attn,
                1,
                weight_init(),
                ParamKind::Weight,
                rng,
            )?,
        })
    }

    /// Returns the `L × d_k` matrix of context-guided entity vectors; tokens
    /// without candidates give zero rows. NULL slots embed as zeros and take
    /// part in the softmax.
    pub fn forward(
        &self,
        g: &mut Graph,
        h_w: Var,
        candidates: &[Option<Vec<Option<usize>>>],
        entities: ParamId,
        trace: &mut AttentionTrace,
        prefix: &str,
    ) -> Result<Var> {
        let d_k = g.store().value(entities).cols();
        let positions: Vec<usize> = (0..candidates.len())
            .filter(|&t| candidates[t].is_some())
            .collect();
        if positions.is_empty() {
            return Ok(g.constant(Tensor::zeros(candidates.len(), d_k)));
        }
        let k = candidates[positions[0]].as_ref().map_or(0, Vec::len);
        if k == 0
            || positions
                .iter()
                .any(|&t| candidates[t].as_ref().map_or(0, Vec::len) != k)
        {
            return Err(Error::DimensionMismatch(
                "candidate sets must all have K ≥ 1 slots".into(),
            ));
        }
        let mut slots = Vec::with_capacity(positions.len() * k);
        let mut context_rows = Vec::with_capacity(positions.len() * k);
        for &t in &positions {
            slots.extend(candidates[t].as_ref().expect("filtered").iter().copied());
            context_rows.extend(std::iter::repeat_n(Some(t), k));
        }
        let e = g.embed(entities, slots)?;
        let h = g.gather_rows(h_w, context_rows)?;
        let w_em = g.param(self.w_em);
        let w_hm = g.param(self.w_hm);
        let w_m = g.param(self.w_m);
        let a = g.matmul(e, w_em)?;
        let b = g.matmul(h, w_hm)?;
        let m = g.add(a, b)?;
        let m = g.tanh(m);
        let scores = g.matmul(m, w_m)?;
        let scores = g.reshape(scores, positions.len(), k)?;
        let alpha = g.softmax_rows(scores);

        let mut rows = Vec::with_capacity(candidates.len());
        let mut next = 0;
        for t in 0..candidates.len() {
            if positions.get(next) == Some(&t) {
                let a_t = g.slice_rows(alpha, next, 1)?;
                let e_t = g.slice_rows(e, next * k, k)?;
                rows.push(g.matmul(a_t, e_t)?);
                trace.insert(
                    format!("{prefix}.candidates@{t}"),
                    g.value(a_t).data().to_vec(),
                );
                next += 1;
            } else {
                rows.push(g.constant(Tensor::zeros(1, d_k)));
            }
        }
        g.concat_rows(&rows)
    }
}

/// One-layer GCN shared across the three window graphs.
#[derive(Debug, Clone)]
pub struct Gcn {
    pub weight: ParamId,
}

impl Gcn {
    pub fn new(store: &mut ParamStore, name: &str, d_k: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Gcn {
            weight: store.init(
                &format!("{name}.weight"),
                d_k,
                d_k,
                weight_init(),
                ParamKind::Weight,
                rng,
            )?,
        })
    }

    /// Mean over the three graphs of `relu(op · E · W)`, restricted to the
    /// original (mention) rows in mention order.
    pub fn forward(&self, g: &mut Graph, graph: &GraphInput, entities: ParamId) -> Result<Var> {
        let n = graph.nodes.len();
        if graph.operators.iter().any(|op| op.shape() != [n, n]) {
            return Err(Error::NodeSetMismatch);
        }
        let e = g.embed(entities, graph.nodes.clone())?;
        let w = g.param(self.weight);
        self.propagate(g, e, w, &graph.operators, graph.n_original)
    }

    /// The propagation step on explicit node features `e` (`n × d_k`).
    pub fn propagate(
        &self,
        g: &mut Graph,
        e: Var,
        w: Var,
        operators: &[Tensor; 3],
        n_original: usize,
    ) -> Result<Var> {
        let ew = g.matmul(e, w)?;
        let mut outs = Vec::with_capacity(3);
        for op in operators {
            let op = g.constant(op.clone());
            let h = g.matmul(op, ew)?;
            let h = g.relu(h);
            outs.push(g.slice_rows(h, 0, n_original)?);
        }
        let s = g.add(outs[0], outs[1])?;
        let s = g.add(s, outs[2])?;
        Ok(g.scale(s, 1.0 / 3.0))
    }
}
