//! Question/answer attention: knowledge-aware self-attention, co-attention
//! and multi-view attention.
//!
//! Sequences are row-major (`L × d`); attention weights are `L × 1` columns.

use rand::Rng;

use crate::autodiff::nn::weight_init;
use crate::autodiff::{Graph, ParamId, ParamKind, ParamStore, Var};
use crate::error::Result;

use super::AttentionTrace;

/// Context and knowledge rows of one sentence.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub h_w: Var,
    pub h_k: Var,
}

fn weight(
    store: &mut ParamStore,
    name: &str,
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> Result<ParamId> {
    store.init(name, rows, cols, weight_init(), ParamKind::Weight, rng)
}

fn record(g: &Graph, trace: &mut AttentionTrace, key: &str, v: Var) {
    trace.insert(key.to_string(), g.value(v).data().to_vec());
}

/// `weightsᵀ · seq` for an `L × 1` weight column: a `1 × d` row.
fn pool(g: &mut Graph, weights: Var, seq: Var) -> Result<Var> {
    let t = g.transpose(weights);
    g.matmul(t, seq)
}

/// Row-max and column-max attention of an affinity matrix `M` (`L_q × L_a`):
/// question weights from each row's max, answer weights from each column's max.
fn max_pool_softmax(g: &mut Graph, m: Var) -> (Var, Var) {
    let rq = g.max_cols(m);
    let aq = g.softmax(rq, 0);
    let ra = g.max_rows(m);
    let ra = g.transpose(ra);
    let aa = g.softmax(ra, 0);
    (aq, aa)
}

/// `x · U · yᵀ`.
fn bilinear(g: &mut Graph, x: Var, u: ParamId, y: Var) -> Result<Var> {
    let u = g.param(u);
    let xu = g.matmul(x, u)?;
    let yt = g.transpose(y);
    g.matmul(xu, yt)
}

/// Knowledge-aware self-attention followed by two-way QA attention.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub w1: ParamId,
    pub w2: ParamId,
    pub w: ParamId,
    pub u_qa: ParamId,
}

impl SelfAttention {
    pub fn new(
        store: &mut ParamStore,
        d_h: usize,
        d_f: usize,
        attn: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(SelfAttention {
            w1: weight(store, "self.w1", d_f, attn, rng)?,
            w2: weight(store, "self.w2", d_h, attn, rng)?,
            w: weight(store, "self.w", attn, 1, rng)?,
            u_qa: weight(store, "self.u_qa", d_h + d_f, d_h + d_f, rng)?,
        })
    }

    /// `α^k = softmax(tanh(mean(H_k) W1 + H_w W2) w)`; returns `α^k` and the
    /// rows of `[H_w : H_k]` scaled by it.
    fn knowledge_weighted(&self, g: &mut Graph, s: Encoded) -> Result<(Var, Var)> {
        let o_k = g.mean_rows(s.h_k);
        let w1 = g.param(self.w1);
        let w2 = g.param(self.w2);
        let w = g.param(self.w);
        let a = g.matmul(o_k, w1)?;
        let b = g.matmul(s.h_w, w2)?;
        let z = g.add_row(b, a)?;
        let z = g.tanh(z);
        let scores = g.matmul(z, w)?;
        let alpha = g.softmax(scores, 0);
        let cat = g.concat_cols(&[s.h_w, s.h_k])?;
        Ok((alpha, g.scale_rows(cat, alpha)?))
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        q: Encoded,
        a: Encoded,
        trace: &mut AttentionTrace,
    ) -> Result<(Var, Var)> {
        let (aq_k, o_q) = self.knowledge_weighted(g, q)?;
        let (aa_k, o_a) = self.knowledge_weighted(g, a)?;
        let m = bilinear(g, o_q, self.u_qa, o_a)?;
        let m = g.tanh(m);
        let (aq_o, aa_o) = max_pool_softmax(g, m);
        record(g, trace, "self.q.knowledge", aq_k);
        record(g, trace, "self.a.knowledge", aa_k);
        record(g, trace, "self.q.output", aq_o);
        record(g, trace, "self.a.output", aa_o);
        Ok((pool(g, aq_o, o_q)?, pool(g, aa_o, o_a)?))
    }
}

/// Averaged word and knowledge co-attention over token-aligned sequences.
#[derive(Debug, Clone)]
pub struct CoAttention {
    pub u_w: ParamId,
    pub u_k: ParamId,
}

impl CoAttention {
    pub fn new(store: &mut ParamStore, d_h: usize, d_f: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(CoAttention {
            u_w: weight(store, "co.u_w", d_h, d_h, rng)?,
            u_k: weight(store, "co.u_k", d_f, d_f, rng)?,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        q: Encoded,
        a: Encoded,
        trace: &mut AttentionTrace,
    ) -> Result<(Var, Var)> {
        let m_w = bilinear(g, q.h_w, self.u_w, a.h_w)?;
        let m_w = g.tanh(m_w);
        let m_k = bilinear(g, q.h_k, self.u_k, a.h_k)?;
        let m_k = g.tanh(m_k);
        let (wq, wa) = max_pool_softmax(g, m_w);
        let (kq, ka) = max_pool_softmax(g, m_k);
        let aq = g.add(wq, kq)?;
        let aq = g.scale(aq, 0.5);
        let aa = g.add(wa, ka)?;
        let aa = g.scale(aa, 0.5);
        record(g, trace, "co.q", aq);
        record(g, trace, "co.a", aa);
        let cq = g.concat_cols(&[q.h_w, q.h_k])?;
        let ca = g.concat_cols(&[a.h_w, a.h_k])?;
        Ok((pool(g, aq, cq)?, pool(g, aa, ca)?))
    }
}

/// Semantic-view scorer `tanh([H : mean(other)] W) u` for one sequence kind.
#[derive(Debug, Clone)]
pub struct SemanticView {
    pub w: ParamId,
    pub u: ParamId,
}

impl SemanticView {
    fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        attn: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(SemanticView {
            w: weight(store, &format!("{name}.w"), input, attn, rng)?,
            u: weight(store, &format!("{name}.u"), attn, 1, rng)?,
        })
    }

    /// One raw score per row of `seq`, with `other` mean-pooled and broadcast.
    pub fn scores(&self, g: &mut Graph, seq: Var, other: Var) -> Result<Var> {
        let rows = g.shape(seq)[0];
        let pooled = g.mean_rows(other);
        let pooled = g.broadcast_rows(pooled, rows)?;
        let cat = g.concat_cols(&[seq, pooled])?;
        let w = g.param(self.w);
        let u = g.param(self.u);
        let z = g.matmul(cat, w)?;
        let z = g.tanh(z);
        g.matmul(z, u)
    }
}

/// Word-view and knowledge-view co-attention fused with semantic-view
/// self-attention: `γ = softmax(α + β)` per sequence.
#[derive(Debug, Clone)]
pub struct MultiView {
    pub u_w: ParamId,
    pub u_k: ParamId,
    pub word_q: SemanticView,
    pub word_a: SemanticView,
    pub knowledge_q: SemanticView,
    pub knowledge_a: SemanticView,
}

impl MultiView {
    pub fn new(
        store: &mut ParamStore,
        d_h: usize,
        d_f: usize,
        attn: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(MultiView {
            u_w: weight(store, "multi.u_w", d_h, d_h, rng)?,
            u_k: weight(store, "multi.u_k", d_f, d_f, rng)?,
            word_q: SemanticView::new(store, "multi.semantic.word_q", d_h + d_f, attn, rng)?,
            word_a: SemanticView::new(store, "multi.semantic.word_a", d_h + d_f, attn, rng)?,
            knowledge_q: SemanticView::new(
                store,
                "multi.semantic.knowledge_q",
                d_f + d_h,
                attn,
                rng,
            )?,
            knowledge_a: SemanticView::new(
                store,
                "multi.semantic.knowledge_a",
                d_f + d_h,
                attn,
                rng,
            )?,
        })
    }

    fn fuse(
        &self,
        g: &mut Graph,
        alpha: Var,
        beta: Var,
        trace: &mut AttentionTrace,
        key: &str,
    ) -> Result<Var> {
        let z = g.add(alpha, beta)?;
        let gamma = g.softmax(z, 0);
        record(g, trace, &format!("multi.{key}.coattention"), alpha);
        let b = g.value(beta).clone();
        let m = b.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = b.data().iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        trace.insert(
            format!("multi.{key}.semantic"),
            e.iter().map(|x| x / s).collect(),
        );
        record(g, trace, &format!("multi.{key}"), gamma);
        Ok(gamma)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        q: Encoded,
        a: Encoded,
        trace: &mut AttentionTrace,
    ) -> Result<(Var, Var)> {
        let m_w = bilinear(g, q.h_w, self.u_w, a.h_w)?;
        let m_k = bilinear(g, q.h_k, self.u_k, a.h_k)?;
        let (aw_q, aw_a) = max_pool_softmax(g, m_w);
        let (ak_q, ak_a) = max_pool_softmax(g, m_k);
        let bw_q = self.word_q.scores(g, q.h_w, q.h_k)?;
        let bw_a = self.word_a.scores(g, a.h_w, a.h_k)?;
        let bk_q = self.knowledge_q.scores(g, q.h_k, q.h_w)?;
        let bk_a = self.knowledge_a.scores(g, a.h_k, a.h_w)?;

        let gw_q = self.fuse(g, aw_q, bw_q, trace, "q.word")?;
        let gk_q = self.fuse(g, ak_q, bk_q, trace, "q.knowledge")?;
        let gw_a = self.fuse(g, aw_a, bw_a, trace, "a.word")?;
        let gk_a = self.fuse(g, ak_a, bk_a, trace, "a.knowledge")?;

        let sw_q = pool(g, gw_q, q.h_w)?;
        let sk_q = pool(g, gk_q, q.h_k)?;
        let sw_a = pool(g, gw_a, a.h_w)?;
        let sk_a = pool(g, gk_a, a.h_k)?;
        Ok((g.concat_cols(&[sw_q, sk_q])?, g.concat_cols(&[sw_a, sk_a])?))
    }
}
