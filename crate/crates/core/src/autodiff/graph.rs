//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node in creation order. Nodes
//! may only reference earlier nodes, so the tape is a topological order and
//! the backward sweep simply walks it in reverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBroadcast(Var, Var),
    BroadcastRows(Var),
    ScaleRows(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Mask(Var, Vec<f64>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    SoftmaxRows(Var),
    MaxRows(Var, Vec<usize>),
    MeanRows(Var),
    Gather(Var, Vec<Option<usize>>),
    Windows(Var, usize, usize),
    Embed(ParamId, Vec<Option<usize>>),
    Sum(Var),
    SumSquares(Var),
    Cosine(Var, Var),
    Bce(Var, f64),
}

struct Node {
    value: Value,
    op: Op,
}

/// Gradient contribution of one graph to one parameter.
pub(crate) enum ParamGrad {
    Dense(ParamId, Tensor),
    Rows(ParamId, Vec<Option<usize>>, Tensor),
}

/// Result of a backward sweep.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    pub(crate) params: Vec<ParamGrad>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` was on the path.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }
}

static EMPTY_STORE: ParamStore = ParamStore::new();

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    training: bool,
    rng: ChaCha8Rng,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::DimensionMismatch(format!(
        "{what}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

impl<'s> Graph<'s> {
    /// Evaluation-mode graph over `store` (dropout disabled).
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            param_vars: vec![None; store.len()],
        }
    }

    /// Training-mode graph; dropout masks come from a stream seeded by `seed`.
    pub fn training(store: &'s ParamStore, seed: u64) -> Self {
        Graph {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..Graph::new(store)
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input that is not a stored parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Alias of [`Graph::input`] for values that are never inspected for gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Copies `v` into a fresh leaf, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(id.0).copied().flatten() {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        if id.0 >= self.param_vars.len() {
            self.param_vars.resize(id.0 + 1, None);
        }
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(what, self.value(a), self.value(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// `m + b` with the `1 × c` row `b` added to every row of `m`.
    pub fn add_row(&mut self, m: Var, b: Var) -> Result<Var> {
        let (mv, bv) = (self.value(m), self.value(b));
        if bv.rows() != 1 || bv.cols() != mv.cols() {
            return Err(mismatch("add_row", mv, bv));
        }
        let mut out = mv.clone();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bv.row(0)) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddRowBroadcast(m, b)))
    }

    /// Repeats a `1 × c` row `n` times.
    pub fn broadcast_rows(&mut self, v: Var, n: usize) -> Result<Var> {
        let vv = self.value(v);
        if vv.rows() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "broadcast_rows expects a row vector, got {}x{}",
                vv.rows(),
                vv.cols()
            )));
        }
        let mut out = Tensor::zeros(n, vv.cols());
        for r in 0..n {
            out.row_mut(r).copy_from_slice(vv.row(0));
        }
        Ok(self.push(out, Op::BroadcastRows(v)))
    }

    /// Scales row `i` of `m` by `w[i]`; `w` is `r × 1` or `1 × r`.
    pub fn scale_rows(&mut self, m: Var, w: Var) -> Result<Var> {
        let (mv, wv) = (self.value(m), self.value(w));
        if wv.len() != mv.rows() || (wv.rows() != 1 && wv.cols() != 1) {
            return Err(mismatch("scale_rows", mv, wv));
        }
        let mut out = mv.clone();
        for r in 0..out.rows() {
            let s = wv.data()[r];
            for o in out.row_mut(r) {
                *o *= s;
            }
        }
        Ok(self.push(out, Op::ScaleRows(m, w)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Inverted dropout. Identity outside training mode or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if !self.training || rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut out = self.value(a).clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Mask(a, mask))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(mismatch("concat_rows", self.value(parts[0]), pv));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0])[0];
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), pv));
            }
            cols += pv.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.rows() {
            return Err(Error::DimensionMismatch(format!(
                "slice rows {start}..{} of {}",
                start + len,
                av.rows()
            )));
        }
        let data = av.data()[start * av.cols()..(start + len) * av.cols()].to_vec();
        let out = Tensor::from_vec(len, av.cols(), data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::DimensionMismatch(format!(
                "slice cols {start}..{} of {}",
                start + len,
                av.cols()
            )));
        }
        let mut out = Tensor::zeros(av.rows(), len);
        for r in 0..av.rows() {
            out.row_mut(r)
                .copy_from_slice(&av.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = Tensor::from_vec(rows, cols, self.value(a).data().to_vec())?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Softmax of every row, computed with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Softmax along `axis` (0 = down each column, 1 = along each row).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Var {
        if axis == 1 {
            self.softmax_rows(a)
        } else {
            let t = self.transpose(a);
            let s = self.softmax_rows(t);
            self.transpose(s)
        }
    }

    /// Column-wise max over rows: `r × c → 1 × c`. Ties go to the first row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Tensor::filled(1, av.cols(), f64::NEG_INFINITY);
        let mut arg = vec![0; av.cols()];
        for r in 0..av.rows() {
            for (c, &x) in av.row(r).iter().enumerate() {
                if x > out.get(0, c) {
                    out.set(0, c, x);
                    arg[c] = r;
                }
            }
        }
        self.push(out, Op::MaxRows(a, arg))
    }

    /// Row-wise max over columns: `r × c → r × 1`.
    pub fn max_cols(&mut self, a: Var) -> Var {
        let t = self.transpose(a);
        let m = self.max_rows(t);
        self.transpose(m)
    }

    /// Max pooling along `axis`; axis 0 reduces rows.
    pub fn max_pool(&mut self, a: Var, axis: usize) -> Var {
        if axis == 0 {
            self.max_rows(a)
        } else {
            self.max_cols(a)
        }
    }

    /// Arithmetic mean over rows: `r × c → 1 × c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.rows() as f64;
        let mut out = Tensor::zeros(1, av.cols());
        for r in 0..av.rows() {
            for (o, &x) in out.row_mut(0).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        out.scale_assign(1.0 / n);
        self.push(out, Op::MeanRows(a))
    }

    /// Mean pooling along `axis`; axis 0 reduces rows.
    pub fn mean_pool(&mut self, a: Var, axis: usize) -> Var {
        if axis == 0 {
            self.mean_rows(a)
        } else {
            let t = self.transpose(a);
            let m = self.mean_rows(t);
            self.transpose(m)
        }
    }

    /// Output row `i` is source row `index[i]`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let av = self.value(a);
        let mut out = Tensor::zeros(index.len(), av.cols());
        for (i, src) in index.iter().enumerate() {
            if let Some(s) = *src {
                if s >= av.rows() {
                    return Err(Error::DimensionMismatch(format!(
                        "gather row {s} of {}",
                        av.rows()
                    )));
                }
                out.row_mut(i).copy_from_slice(av.row(s));
            }
        }
        Ok(self.push(out, Op::Gather(a, index)))
    }

    /// Sliding windows for same-length convolution.
    ///
    /// Row `t` of the `L × (width·d)` output concatenates input rows
    /// `t − left ..= t − left + width − 1`, zero outside `0..L`.
    pub fn windows(&mut self, a: Var, width: usize, left: usize) -> Var {
        let av = self.value(a);
        let (l, d) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(l, width * d);
        for t in 0..l {
            for w in 0..width {
                let src = t as isize - left as isize + w as isize;
                if src >= 0 && (src as usize) < l {
                    out.row_mut(t)[w * d..(w + 1) * d].copy_from_slice(av.row(src as usize));
                }
            }
        }
        self.push(out, Op::Windows(a, width, left))
    }

    /// Rows of a stored table; `None` yields a zero row.
    pub fn embed(&mut self, table: ParamId, index: Vec<Option<usize>>) -> Result<Var> {
        let tv = self.store.value(table);
        let mut out = Tensor::zeros(index.len(), tv.cols());
        for (i, src) in index.iter().enumerate() {
            if let Some(s) = *src {
                if s >= tv.rows() {
                    return Err(Error::DimensionMismatch(format!(
                        "embedding row {s} of {}",
                        tv.rows()
                    )));
                }
                out.row_mut(i).copy_from_slice(tv.row(s));
            }
        }
        Ok(self.push(out, Op::Embed(table, index)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum_squares());
        self.push(out, Op::SumSquares(a))
    }

    /// Cosine similarity of two same-shape tensors; 0 if either is zero.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let na = av.sum_squares().sqrt();
        let nb = bv.sum_squares().sqrt();
        let dot: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).sum();
        let c = if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        };
        Ok(self.push(Tensor::scalar(c), Op::Cosine(a, b)))
    }

    /// Binary cross-entropy of a `1 × 1` probability against `label`,
    /// with the probability clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, p: Var, label: f64) -> Var {
        let pv = clamp_prob(self.value(p).item());
        let loss = -(label * pv.ln() + (1.0 - label) * (1.0 - pv).ln());
        self.push(Tensor::scalar(loss), Op::Bce(p, label))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut params = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let out = match &self.nodes[i].value {
                Value::Owned(t) => t,
                Value::Param(id) => self.store.value(*id),
            };
            self.backward_node(i, &self.nodes[i].op, out, &g, &mut grads, &mut params);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn backward_node(
        &self,
        i: usize,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        params: &mut Vec<ParamGrad>,
    ) {
        let mut acc = |v: Var, t: Tensor| {
            assert!(v.0 < i, "tape references a later node");
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Param(id) => params.push(ParamGrad::Dense(*id, g.clone())),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.matmul_t(bv));
                acc(*b, av.t_matmul(g));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, |x, y| x * y));
                acc(*b, g.zip_map(av, |x, y| x * y));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::AddRowBroadcast(m, b) => {
                acc(*m, g.clone());
                acc(*b, column_sums(g));
            }
            Op::BroadcastRows(v) => acc(*v, column_sums(g)),
            Op::ScaleRows(m, w) => {
                let (mv, wv) = (self.value(*m), self.value(*w));
                let mut gm = g.clone();
                let mut gw = Tensor::zeros(wv.rows(), wv.cols());
                for r in 0..g.rows() {
                    let s = wv.data()[r];
                    gw.data_mut()[r] = g.row(r).iter().zip(mv.row(r)).map(|(x, y)| x * y).sum();
                    for x in gm.row_mut(r) {
                        *x *= s;
                    }
                }
                acc(*m, gm);
                acc(*w, gw);
            }
            Op::Tanh(a) => acc(*a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |x, y| x * y * (1.0 - y))),
            Op::Relu(a) => {
                let av = self.value(*a);
                acc(*a, g.zip_map(av, |x, y| if y > 0.0 { x } else { 0.0 }));
            }
            Op::Mask(a, mask) => {
                let mut ga = g.clone();
                for (x, m) in ga.data_mut().iter_mut().zip(mask) {
                    *x *= m;
                }
                acc(*a, ga);
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = self.shape(p)[0];
                    let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    acc(
                        p,
                        Tensor::from_vec(rows, cols, data).expect("concat grad shape"),
                    );
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let [rows, cols] = self.shape(p);
                    let mut gp = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        gp.row_mut(r)
                            .copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    acc(p, gp);
                    offset += cols;
                }
            }
            Op::SliceRows(a, start) => {
                let [rows, cols] = self.shape(*a);
                let mut ga = Tensor::zeros(rows, cols);
                ga.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::SliceCols(a, start) => {
                let [rows, cols] = self.shape(*a);
                let mut ga = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    ga.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::Reshape(a) => {
                let [rows, cols] = self.shape(*a);
                acc(
                    *a,
                    Tensor::from_vec(rows, cols, g.data().to_vec()).expect("reshape grad"),
                );
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                        *o = y[c] * (gr[c] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::MaxRows(a, arg) => {
                let [rows, cols] = self.shape(*a);
                let mut ga = Tensor::zeros(rows, cols);
                for (c, &r) in arg.iter().enumerate() {
                    ga.set(r, c, g.get(0, c));
                }
                acc(*a, ga);
            }
            Op::MeanRows(a) => {
                let [rows, cols] = self.shape(*a);
                let mut ga = Tensor::zeros(rows, cols);
                let inv = 1.0 / rows as f64;
                for r in 0..rows {
                    for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o = x * inv;
                    }
                }
                acc(*a, ga);
            }
            Op::Gather(a, index) => {
                let [rows, cols] = self.shape(*a);
                let mut ga = Tensor::zeros(rows, cols);
                for (i, src) in index.iter().enumerate() {
                    if let Some(s) = *src {
                        for (o, &x) in ga.row_mut(s).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::Windows(a, width, left) => {
                let [l, d] = self.shape(*a);
                let mut ga = Tensor::zeros(l, d);
                for t in 0..l {
                    for w in 0..*width {
                        let src = t as isize - *left as isize + w as isize;
                        if src >= 0 && (src as usize) < l {
                            let gs = &g.row(t)[w * d..(w + 1) * d];
                            for (o, &x) in ga.row_mut(src as usize).iter_mut().zip(gs) {
                                *o += x;
                            }
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::Embed(table, index) => {
                params.push(ParamGrad::Rows(*table, index.clone(), g.clone()));
            }
            Op::Sum(a) => {
                let [rows, cols] = self.shape(*a);
                acc(*a, Tensor::filled(rows, cols, g.item()));
            }
            Op::SumSquares(a) => {
                let s = 2.0 * g.item();
                acc(*a, self.value(*a).map(|x| x * s));
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let na = av.sum_squares().sqrt();
                let nb = bv.sum_squares().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return;
                }
                let c = out.item();
                let gs = g.item();
                let ga = av.zip_map(bv, |x, y| gs * (y / (na * nb) - c * x / (na * na)));
                let gb = bv.zip_map(av, |y, x| gs * (x / (na * nb) - c * y / (nb * nb)));
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Bce(p, label) => {
                let raw = self.value(*p).item();
                let pv = clamp_prob(raw);
                let d = if pv != raw {
                    0.0
                } else {
                    -label / pv + (1.0 - label) / (1.0 - pv)
                };
                acc(*p, Tensor::scalar(g.item() * d));
            }
        }
    }
}

impl Graph<'static> {
    /// Graph with no stored parameters, for pure tensor functions.
    pub fn standalone() -> Self {
        Graph::new(&EMPTY_STORE)
    }
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(1e-7, 1.0 - 1e-7)
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, &x) in out.row_mut(0).iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    out
}

/// Per-parameter gradient accumulator shared across the graphs of a batch.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    grads: Vec<Option<Tensor>>,
}

impl GradBuffer {
    pub fn new(store: &ParamStore) -> Self {
        GradBuffer {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn zero(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn slot(&mut self, store: &ParamStore, id: ParamId) -> &mut Tensor {
        let [r, c] = store.value(id).shape();
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(r, c))
    }

    /// Adds the parameter gradients of one backward sweep.
    ///
    /// Frozen parameters and frozen rows receive nothing.
    pub fn accumulate(&mut self, store: &ParamStore, grads: &Gradients) {
        for pg in &grads.params {
            match pg {
                ParamGrad::Dense(id, g) => {
                    if !store.get(*id).trainable() {
                        continue;
                    }
                    self.slot(store, *id).add_assign(g);
                }
                ParamGrad::Rows(id, index, g) => {
                    if !store.get(*id).trainable() {
                        continue;
                    }
                    let slot = self.slot(store, *id);
                    for (i, src) in index.iter().enumerate() {
                        if let Some(s) = *src {
                            for (o, &x) in slot.row_mut(s).iter_mut().zip(g.row(i)) {
                                *o += x;
                            }
                        }
                    }
                }
            }
        }
        for (id, p) in store.iter() {
            if p.frozen_rows.is_empty() {
                continue;
            }
            if let Some(Some(slot)) = self.grads.get_mut(id.0) {
                for &r in &p.frozen_rows {
                    slot.row_mut(r).iter_mut().for_each(|x| *x = 0.0);
                }
            }
        }
    }
}
