//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::nn::{BiLstm, ConvBank};
use super::params::ParamStore;
use super::Tensor;
use crate::error::Result;

/// `|a − b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

fn scalar_of(g: &Graph, v: Var) -> f64 {
    g.value(v).item()
}

/// Compares reverse-mode gradients of the scalar function `f` at `inputs`
/// against central differences with step `eps`; returns the largest
/// relative error over all input coordinates.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::standalone();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(scalar_of(&g, out))
    };

    let mut g = Graph::standalone();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].rows(), inputs[k].cols()));
        for idx in 0..inputs[k].len() {
            let orig = inputs[k].data()[idx];
            probe[k].data_mut()[idx] = orig + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[idx] = orig - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[idx], numeric));
        }
    }
    Ok(worst)
}

/// Gradient check over every trainable parameter coordinate in `store`.
///
/// `f` builds the scalar loss on a fresh graph; it is re-run twice per
/// coordinate, so keep the model tiny.
pub fn grad_check_params<F>(store: &mut ParamStore, f: F, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        let grads = g.backward(out)?;
        let mut buf = super::graph::GradBuffer::new(store);
        buf.accumulate(store, &grads);
        buf
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        Ok(scalar_of(&g, out))
    };

    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let p = store.get(id);
        if !p.trainable() {
            continue;
        }
        let cols = p.value.cols();
        let frozen: Vec<usize> = p.frozen_rows.clone();
        let n = p.value.len();
        for idx in 0..n {
            if frozen.contains(&(idx / cols)) {
                continue;
            }
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + eps;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[idx] = orig - eps;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[idx]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches data")
}

/// Central-difference step for kernel checks.
pub const KERNEL_STEP: f64 = 1e-5;

/// Worst relative error of every tape kernel's backward rule on seeded
/// random inputs, followed by the BiLSTM and convolution layers checked
/// through their parameters.
pub fn kernel_suite(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let a = random(3, 4, &mut r);
    let b = random(3, 4, &mut r);
    let row = random(1, 4, &mut r);
    let col = random(3, 1, &mut r);
    let sq = random(4, 4, &mut r);
    let weights = Tensor::row_vector(vec![0.2, -0.4, 0.9]);
    type Case = (
        &'static str,
        Vec<Tensor>,
        Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>,
    );
    let cases: Vec<Case> = vec![
        (
            "matmul",
            vec![a.clone(), sq.clone()],
            Box::new(|g, v| {
                let y = g.matmul(v[0], v[1])?;
                let y = g.tanh(y);
                Ok(g.sum(y))
            }),
        ),
        (
            "transpose",
            vec![a.clone(), weights.clone()],
            Box::new(|g, v| {
                let t = g.transpose(v[0]);
                let w = g.transpose(v[1]);
                let y = g.matmul(t, w)?;
                Ok(g.sum_squares(y))
            }),
        ),
        (
            "add/sub/mul",
            vec![a.clone(), b.clone()],
            Box::new(|g, v| {
                let s = g.add(v[0], v[1])?;
                let d = g.sub(v[0], v[1])?;
                let m = g.mul(s, d)?;
                Ok(g.sum_squares(m))
            }),
        ),
        (
            "add_row/broadcast",
            vec![a.clone(), row.clone()],
            Box::new(|g, v| {
                let y = g.add_row(v[0], v[1])?;
                let bc = g.broadcast_rows(v[1], 3)?;
                let y = g.mul(y, bc)?;
                Ok(g.sum_squares(y))
            }),
        ),
        (
            "scale_rows",
            vec![a.clone(), col.clone()],
            Box::new(|g, v| {
                let y = g.scale_rows(v[0], v[1])?;
                Ok(g.sum_squares(y))
            }),
        ),
        (
            "sigmoid/tanh",
            vec![a.clone()],
            Box::new(|g, v| {
                let s = g.sigmoid(v[0]);
                let t = g.tanh(s);
                Ok(g.sum_squares(t))
            }),
        ),
        (
            "relu",
            vec![a.clone()],
            Box::new(|g, v| {
                let y = g.relu(v[0]);
                Ok(g.sum_squares(y))
            }),
        ),
        (
            "concat/slice",
            vec![a.clone(), b.clone()],
            Box::new(|g, v| {
                let c = g.concat_cols(&[v[0], v[1]])?;
                let c = g.concat_rows(&[c, c])?;
                let s = g.slice_cols(c, 2, 5)?;
                let s = g.slice_rows(s, 1, 4)?;
                Ok(g.sum_squares(s))
            }),
        ),
        (
            "reshape",
            vec![a.clone()],
            Box::new(|g, v| {
                let y = g.reshape(v[0], 6, 2)?;
                let y = g.tanh(y);
                let m = g.max_rows(y);
                Ok(g.sum_squares(m))
            }),
        ),
        (
            "softmax",
            vec![a.clone(), b.clone()],
            Box::new(|g, v| {
                let s = g.softmax_rows(v[0]);
                let s0 = g.softmax(v[0], 0);
                let y = g.mul(s, v[1])?;
                let z = g.mul(s0, v[1])?;
                let y = g.add(y, z)?;
                Ok(g.sum(y))
            }),
        ),
        (
            "max/mean pool",
            vec![a.clone()],
            Box::new(|g, v| {
                let m = g.max_pool(v[0], 0);
                let c = g.max_pool(v[0], 1);
                let mean = g.mean_pool(v[0], 1);
                let mm = g.mean_pool(v[0], 0);
                let a1 = g.sum_squares(m);
                let a2 = g.sum_squares(c);
                let a3 = g.sum_squares(mean);
                let a4 = g.sum_squares(mm);
                let s = g.add(a1, a2)?;
                let s = g.add(s, a3)?;
                g.add(s, a4)
            }),
        ),
        (
            "gather/windows",
            vec![a.clone()],
            Box::new(|g, v| {
                let y = g.gather_rows(v[0], vec![Some(2), None, Some(0), Some(2)])?;
                let w = g.windows(y, 3, 1);
                Ok(g.sum_squares(w))
            }),
        ),
        (
            "cosine",
            vec![
                row.clone(),
                random(1, 4, &mut ChaCha8Rng::seed_from_u64(seed)),
            ],
            Box::new(|g, v| g.cosine(v[0], v[1])),
        ),
        (
            "bce",
            vec![Tensor::row_vector(vec![0.3, -0.2])],
            Box::new(|g, v| {
                let p = g.softmax_rows(v[0]);
                let p0 = g.slice_cols(p, 0, 1)?;
                Ok(g.bce(p0, 0.0))
            }),
        ),
    ];
    let mut out = Vec::with_capacity(cases.len() + 2);
    for (name, inputs, f) in cases {
        out.push((name, grad_check(|g, v| f(g, v), &inputs, KERNEL_STEP)?));
    }

    // Separate stores so the conv probe sees a generic input rather than
    // near-zero LSTM outputs sitting on relu and max-pool kinks.
    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "enc", 3, 2, &mut r)?;
    let x = random(4, 3, &mut r);
    let recurrent = grad_check_params(
        &mut store,
        |g| {
            let xi = g.constant(x.clone());
            let h = lstm.forward(g, xi)?;
            Ok(g.sum_squares(h))
        },
        KERNEL_STEP,
    )?;
    out.push(("bilstm parameters", recurrent));

    let mut store = ParamStore::new();
    let conv = ConvBank::new(&mut store, "conv", &[2, 3], 4, 2, &mut r)?;
    let x = random(5, 4, &mut r);
    let convolution = grad_check_params(
        &mut store,
        |g| {
            let xi = g.constant(x.clone());
            let c = conv.forward(g, xi)?;
            Ok(g.sum_squares(c))
        },
        KERNEL_STEP,
    )?;
    out.push(("conv bank parameters", convolution));
    Ok(out)
}
