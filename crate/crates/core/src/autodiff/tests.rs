use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{conv1d, BiLstm};
use super::*;

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

#[test]
fn fixed_points() {
    let mut g = Graph::standalone();
    let x = g.input(Tensor::row_vector(vec![0.0, -2.0]));
    let t = g.tanh(x);
    let r = g.relu(x);
    assert_eq!(g.value(t).data()[0], 0.0);
    assert_eq!(g.value(r).data()[1], 0.0);
}

#[test]
fn dropout_is_identity_in_eval_mode() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
    let y = g.dropout(x, 0.5);
    assert_eq!(x, y);

    let mut g = Graph::training(&store, 3);
    let x = g.input(Tensor::filled(1, 1000, 1.0));
    let y = g.dropout(x, 0.5);
    let kept = g.value(y).data().iter().filter(|&&v| v != 0.0).count();
    assert!((400..600).contains(&kept));
    assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
}

#[test]
fn concat_shapes() {
    let mut g = Graph::standalone();
    let a = g.input(Tensor::zeros(2, 3));
    let b = g.input(Tensor::zeros(4, 3));
    let c = g.concat_rows(&[a, b]).unwrap();
    assert_eq!(g.shape(c), [6, 3]);
    assert!(matches!(
        g.concat_cols(&[a, b]),
        Err(crate::Error::DimensionMismatch(_))
    ));
    assert!(matches!(
        g.matmul(a, b),
        Err(crate::Error::DimensionMismatch(_))
    ));
}

#[test]
fn softmax_examples() {
    let mut g = Graph::standalone();
    let x = g.input(Tensor::row_vector(vec![0.0, 0.0, 0.0]));
    let s = g.softmax_rows(x);
    for &v in g.value(s).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    let base = vec![0.3, -1.2, 2.5, 0.0];
    let shifted: Vec<f64> = base.iter().map(|v| v + 17.25).collect();
    let a = g.input(Tensor::row_vector(base));
    let b = g.input(Tensor::row_vector(shifted));
    let sa = g.softmax_rows(a);
    let sb = g.softmax_rows(b);
    assert!(g.value(sa).max_abs_diff(g.value(sb)) <= 1e-12);

    let big = g.input(Tensor::row_vector(vec![1000.0, 0.0]));
    let s = g.softmax_rows(big);
    assert_eq!(g.value(s).data(), &[1.0, 0.0]);
}

#[test]
fn softmax_along_columns() {
    let mut g = Graph::standalone();
    let x = g.input(random(3, 2, &mut rng()));
    let s = g.softmax(x, 0);
    let v = g.value(s);
    for c in 0..2 {
        let total: f64 = (0..3).map(|r| v.get(r, c)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn conv1d_examples() {
    let mut r = rng();
    let input = random(5, 3, &mut r);
    let mut g = Graph::standalone();
    let x = g.input(input.clone());
    let k = g.input(Tensor::identity(3));
    let b = g.input(Tensor::zeros(1, 3));
    let y = conv1d(&mut g, x, k, b, 1).unwrap();
    assert!(g.value(y).max_abs_diff(&input.map(f64::tanh)) < 1e-15);

    let zero = g.input(Tensor::zeros(4, 3));
    for width in 1..=4 {
        let k = g.input(random(width * 3, 2, &mut r));
        let b = g.input(Tensor::zeros(1, 2));
        let y = conv1d(&mut g, zero, k, b, width).unwrap();
        assert_eq!(g.shape(y), [4, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn conv1d_padding_layout() {
    // width 2: left pad 0, right pad 1, row t sees [x_t, x_{t+1}]
    let mut g = Graph::standalone();
    let x = g.input(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap());
    let w = g.windows(x, 2, 0);
    assert_eq!(g.value(w).data(), &[1.0, 2.0, 2.0, 3.0, 3.0, 0.0]);
    // width 3: one row of padding on each side
    let w = g.windows(x, 3, 1);
    assert_eq!(
        g.value(w).data(),
        &[0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 0.0]
    );
}

#[test]
fn pooling_examples() {
    let mut g = Graph::standalone();
    let x = g.input(Tensor::from_rows(&[vec![1.0, 3.0], vec![5.0, 7.0]]).unwrap());
    let m = g.mean_pool(x, 0);
    assert_eq!(g.value(m).data(), &[3.0, 5.0]);

    let row = g.input(Tensor::row_vector(vec![-1.0, 4.0, 2.0]));
    let p = g.max_pool(row, 0);
    assert_eq!(g.value(p).data(), &[-1.0, 4.0, 2.0]);

    let same = g.input(Tensor::from_rows(&vec![vec![0.5, -2.0]; 4]).unwrap());
    let m = g.mean_pool(same, 0);
    assert!(
        g.value(m)
            .max_abs_diff(&Tensor::row_vector(vec![0.5, -2.0]))
            < 1e-15
    );
}

#[test]
fn bilstm_examples() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "enc", 3, 4, &mut r).unwrap();
    let input = random(5, 3, &mut r);

    let mut g = Graph::new(&store);
    let x = g.input(input.clone());
    let h = lstm.forward(&mut g, x).unwrap();
    assert_eq!(g.shape(h), [5, 8]);
    let out = g.value(h).clone();

    // With forward and backward cells swapped, a reversed input yields the
    // position-reversed output with its halves swapped.
    let swapped = BiLstm {
        forward: lstm.backward.clone(),
        backward: lstm.forward.clone(),
    };
    let rev_rows: Vec<Vec<f64>> = (0..5).rev().map(|t| input.row(t).to_vec()).collect();
    let xr = g.input(Tensor::from_rows(&rev_rows).unwrap());
    let hr = swapped.forward(&mut g, xr).unwrap();
    let out_r = g.value(hr);
    for t in 0..5 {
        let orig = out.row(t);
        let rev = out_r.row(4 - t);
        for k in 0..4 {
            assert!((orig[k] - rev[4 + k]).abs() < 1e-14);
            assert!((orig[4 + k] - rev[k]).abs() < 1e-14);
        }
    }

    let mut zero_store = store.clone();
    let ids: Vec<_> = zero_store.ids().collect();
    for id in ids {
        zero_store
            .value_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new(&zero_store);
    let x = g.input(input);
    let h = lstm.forward(&mut g, x).unwrap();
    assert!(g.value(h).data().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_examples() {
    let mut store = ParamStore::new();
    let p = store
        .add(
            "p",
            Tensor::row_vector(vec![0.3, -0.7, 2.0]),
            InitSpec::Given,
            ParamKind::Weight,
        )
        .unwrap();
    let q = store
        .add(
            "q",
            Tensor::row_vector(vec![1.0, 1.0, 1.0]),
            InitSpec::Given,
            ParamKind::Weight,
        )
        .unwrap();

    let mut g = Graph::new(&store);
    let pv = g.param(p);
    let loss = g.sum(pv);
    let grads = g.backward(loss).unwrap();
    let mut buf = GradBuffer::new(&store);
    buf.accumulate(&store, &grads);
    assert_eq!(buf.get(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    assert!(
        buf.get(q).is_none(),
        "parameters off the path get no gradient"
    );

    let mut g = Graph::new(&store);
    let pv = g.param(p);
    let t = g.tanh(pv);
    let s = g.sum(t);
    let loss = g.scale(s, 0.0);
    let grads = g.backward(loss).unwrap();
    let mut buf = GradBuffer::new(&store);
    buf.accumulate(&store, &grads);
    assert!(buf.get(p).unwrap().data().iter().all(|&v| v == 0.0));

    let mut g = Graph::new(&store);
    let pv = g.param(p);
    let d = g.detach(pv);
    let both = g.add(pv, d).unwrap();
    let loss = g.sum_squares(both);
    let grads = g.backward(loss).unwrap();
    // d(‖p + stop(p)‖²)/dp = 2(p + p)
    let expected: Vec<f64> = [0.3, -0.7, 2.0].iter().map(|v| 4.0 * v).collect();
    let got = grads.wrt(pv).unwrap();
    for (a, b) in got.data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(grads.wrt(d).is_some());
}

#[test]
fn frozen_rows_get_no_gradient() {
    let mut store = ParamStore::new();
    let table = store
        .add(
            "emb",
            Tensor::filled(3, 2, 1.0),
            InitSpec::Given,
            ParamKind::Embedding,
        )
        .unwrap();
    store.get_mut(table).frozen_rows.push(0);
    let mut g = Graph::new(&store);
    let rows = g
        .embed(table, vec![Some(0), Some(2), None, Some(0)])
        .unwrap();
    let loss = g.sum(rows);
    let grads = g.backward(loss).unwrap();
    let mut buf = GradBuffer::new(&store);
    buf.accumulate(&store, &grads);
    let gt = buf.get(table).unwrap();
    assert_eq!(gt.row(0), &[0.0, 0.0]);
    assert_eq!(gt.row(1), &[0.0, 0.0]);
    assert_eq!(gt.row(2), &[1.0, 1.0]);
}

#[test]
fn grad_check_linear_is_exact() {
    let mut r = rng();
    let w = random(3, 4, &mut r);
    let x = random(4, 2, &mut r);
    let err = grad_check(
        |g, v| {
            let y = g.matmul(v[0], v[1])?;
            let y = g.scale(y, 2.5);
            Ok(g.sum(y))
        },
        &[w, x],
        1e-4,
    )
    .unwrap();
    assert!(err <= 1e-9, "{err}");
}

#[test]
fn grad_check_tanh_layer() {
    let mut r = rng();
    let w = random(4, 5, &mut r);
    let x = random(5, 1, &mut r);
    let err = grad_check(
        |g, v| {
            let y = g.matmul(v[0], v[1])?;
            let y = g.tanh(y);
            Ok(g.sum(y))
        },
        &[w, x],
        1e-4,
    )
    .unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn grad_check_softmax_cross_entropy() {
    let mut r = rng();
    let logits = random(1, 2, &mut r);
    let err = grad_check(
        |g, v| {
            let p = g.softmax_rows(v[0]);
            let p1 = g.slice_cols(p, 1, 1)?;
            Ok(g.bce(p1, 1.0))
        },
        &[logits],
        1e-4,
    )
    .unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn grad_check_every_kernel() {
    for (name, err) in kernel_suite(7).unwrap() {
        assert!(err <= 1e-6, "{name}: {err}");
    }
}

#[test]
fn adam_descends_a_quadratic() {
    let mut store = ParamStore::new();
    let p = store
        .add(
            "p",
            Tensor::row_vector(vec![3.0, -2.0]),
            InitSpec::Given,
            ParamKind::Weight,
        )
        .unwrap();
    let mut adam = Adam::new(0.1, &store);
    for _ in 0..300 {
        let mut buf = GradBuffer::new(&store);
        let grads = {
            let mut g = Graph::new(&store);
            let v = g.param(p);
            let l = g.sum_squares(v);
            g.backward(l).unwrap()
        };
        buf.accumulate(&store, &grads);
        adam.step(&mut store, &buf);
    }
    assert!(store.value(p).sum_squares() < 1e-3);
}

#[test]
fn checkpoint_roundtrip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng();
    let mut store = ParamStore::new();
    store
        .init(
            "a",
            2,
            3,
            InitSpec::Uniform(-1.0, 1.0),
            ParamKind::Weight,
            &mut r,
        )
        .unwrap();
    store
        .init(
            "b",
            1,
            4,
            InitSpec::Uniform(-1.0, 1.0),
            ParamKind::Embedding,
            &mut r,
        )
        .unwrap();
    let (m, p) = (dir.path().join("m.txt"), dir.path().join("p.bin"));
    checkpoint::save(&store, "abc", &m, &p).unwrap();

    let mut loaded = store.clone();
    for id in store.ids() {
        loaded
            .value_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    checkpoint::load(&mut loaded, "abc", &m, &p).unwrap();
    for id in store.ids() {
        assert!(loaded.value(id).max_abs_diff(store.value(id)) < 1e-6);
    }
    assert_eq!(std::fs::metadata(&p).unwrap().len(), 10 * 4);
    assert!(matches!(
        checkpoint::load(&mut loaded, "other", &m, &p),
        Err(crate::Error::ConfigMismatch(_))
    ));
}

mod cosine {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let mut g = Graph::standalone();
        let a = g.input(Tensor::row_vector(a.to_vec()));
        let b = g.input(Tensor::row_vector(b.to_vec()));
        let c = g.cosine(a, b).unwrap();
        g.value(c).data()[0]
    }

    proptest! {
        #[test]
        fn invariant_to_positive_scaling(
            pair in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12),
            s in 0.01f64..100.0,
            t in 0.01f64..100.0,
        ) {
            let a: Vec<f64> = pair.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pair.iter().map(|p| p.1).collect();
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let scaled_a: Vec<f64> = a.iter().map(|x| x * s).collect();
            let scaled_b: Vec<f64> = b.iter().map(|x| x * t).collect();
            let c = cos(&a, &b);
            assert_abs_diff_eq!(c, cos(&scaled_a, &scaled_b), epsilon = 1e-12);
            prop_assert!(c.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn zero_vector_scores_zero() {
        assert_eq!(cos(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }
}

#[test]
fn lstm_starts_small_with_zero_biases() {
    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "enc", 6, 5, &mut rng()).unwrap();
    for cell in [&lstm.forward, &lstm.backward] {
        for w in [cell.w_input, cell.w_hidden] {
            assert!(store.value(w).data().iter().all(|x| x.abs() <= 0.1));
        }
        assert!(store.value(cell.bias).data().iter().all(|&x| x == 0.0));
    }
}
