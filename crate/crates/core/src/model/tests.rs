use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fixture::*;
use super::*;

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for variant in Variant::ALL {
        let worst = full_loss_grad_error(variant).unwrap();
        assert!(worst <= 1e-4, "{variant}: relative error {worst:e}");
    }
}

#[test]
fn attention_weights_are_distributions() {
    let inst = tiny_instance();
    for variant in Variant::ALL {
        let model = tiny_model(tiny_config(variant));
        for out in model.predict(&inst).unwrap() {
            assert!(out.prob > 0.0 && out.prob < 1.0);
            for (key, w) in &out.trace {
                let s: f64 = w.iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "{variant} {key}: sums to {s}");
                assert!(w.iter().all(|&x| x >= 0.0));
            }
            if variant != Variant::Knn {
                assert!(
                    out.trace.keys().any(|k| !k.contains("candidates@")),
                    "{variant} records no pooling weights"
                );
            }
        }
    }
}

#[test]
fn single_token_sentences_get_full_weight() {
    let one = sentence(&[2], vec![Some(vec![Some(0), Some(1)])], &[0]);
    let inst = PreparedInstance {
        qid: "q".into(),
        question: one.clone(),
        candidates: vec![PreparedCandidate {
            input: one,
            features: [0.0; 4],
            label: 1,
        }],
    };
    for variant in [
        Variant::KannSelf,
        Variant::KannCo,
        Variant::KannMulti,
        Variant::Ckann,
    ] {
        let model = tiny_model(tiny_config(variant));
        let out = &model.predict(&inst).unwrap()[0];
        for (key, w) in &out.trace {
            if !key.contains("candidates@")
                && !key.ends_with("semantic")
                && !key.ends_with("coattention")
            {
                assert_eq!(w, &vec![1.0], "{variant} {key}");
            }
        }
    }
}

#[test]
fn similarity_kinds() {
    let mut config = tiny_config(Variant::Knn);
    let d = config.sentence_dim();
    let row = |v: f64, at: usize| {
        let mut data = vec![0.0; d];
        data[at] = v;
        Tensor::row_vector(data)
    };
    for (kind, expect) in [
        (SimKind::Cosine, 1.0),
        (SimKind::Dot, 6.0),
        (SimKind::Bilinear, 6.0),
    ] {
        config.sim_kind = kind;
        let mut model = tiny_model(config.clone());
        if let Some(u) = model.joint.bilinear {
            *model.store.value_mut(u) = Tensor::identity(d);
        }
        let mut g = Graph::new(&model.store);
        let q = g.input(row(2.0, 1));
        let a = g.input(row(3.0, 1));
        let sim = model.joint.similarity(&mut g, q, a).unwrap().unwrap();
        assert!((g.value(sim).item() - expect).abs() < 1e-12, "{kind:?}");

        let orth = g.input(row(3.0, 0));
        let sim = model.joint.similarity(&mut g, q, orth).unwrap().unwrap();
        assert!(g.value(sim).item().abs() < 1e-12);
    }
    config.sim_kind = SimKind::None;
    let model = tiny_model(config);
    let mut g = Graph::new(&model.store);
    let q = g.input(row(1.0, 0));
    assert!(model.joint.similarity(&mut g, q, q).unwrap().is_none());
    let short = g.input(Tensor::row_vector(vec![1.0]));
    assert!(matches!(
        model.joint.similarity(&mut g, q, short),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn loss_reference_values() {
    let mut g = Graph::standalone();
    let half = g.input(Tensor::scalar(0.5));
    let pairs: Vec<(Var, u8)> = (0..6).map(|i| (half, (i % 2) as u8)).collect();
    let l = loss(&mut g, &pairs, 0.0).unwrap();
    assert!((g.value(l).item() - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);

    let one = g.input(Tensor::scalar(1.0));
    let zero = g.input(Tensor::scalar(0.0));
    let l = loss(&mut g, &[(one, 1), (zero, 0)], 0.0).unwrap();
    assert!(g.value(l).item() < 1e-6);
}

#[test]
fn l2_penalty_skips_embeddings() {
    let mut config = tiny_config(Variant::Knn);
    config.l2_lambda = 0.5;
    let model = tiny_model(config);
    let expect: f64 = model
        .store
        .iter()
        .filter(|(_, p)| p.kind == ParamKind::Weight)
        .map(|(_, p)| p.value.sum_squares())
        .sum::<f64>()
        * 0.5;
    let mut g = Graph::new(&model.store);
    let p = l2_penalty(&mut g, 0.5);
    assert!((g.value(p).item() - expect).abs() < 1e-12);
    assert_eq!(model.store.get(model.entities).kind, ParamKind::Frozen);
    assert_eq!(model.store.get(model.words).kind, ParamKind::Embedding);
    assert_eq!(model.store.value(model.words).row(PAD), [0.0; 5]);
}

#[test]
fn multi_view_is_symmetric_under_swapped_roles() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mv = MultiView::new(&mut store, 4, 3, 4, &mut rng).unwrap();
    for u in [mv.u_w, mv.u_k] {
        let t = store.value(u).clone();
        let sym = t.zip_map(&t.transpose(), |a, b| 0.5 * (a + b));
        *store.value_mut(u) = sym;
    }
    for (from, to) in [(&mv.word_q, &mv.word_a), (&mv.knowledge_q, &mv.knowledge_a)] {
        for (s, d) in [(from.w, to.w), (from.u, to.u)] {
            let v = store.value(s).clone();
            *store.value_mut(d) = v;
        }
    }
    let mut g = Graph::new(&store);
    let enc = |g: &mut Graph, rows: usize, k_rows: usize, seed: u64| Encoded {
        h_w: g.input(random_table(rows, 4, seed)),
        h_k: g.input(random_table(k_rows, 3, seed + 100)),
    };
    let q = enc(&mut g, 5, 2, 1);
    let a = enc(&mut g, 3, 4, 2);
    let mut t = AttentionTrace::new();
    let (sq, sa) = mv.forward(&mut g, q, a, &mut t).unwrap();
    let (sq2, sa2) = mv.forward(&mut g, a, q, &mut t).unwrap();
    assert!(g.value(sq).max_abs_diff(g.value(sa2)) < 1e-12);
    assert!(g.value(sa).max_abs_diff(g.value(sq2)) < 1e-12);
}

#[test]
fn ablation_ignores_entity_table() {
    let inst = tiny_instance();
    for variant in Variant::ALL {
        let mut config = tiny_config(variant);
        config.ablate_knowledge = true;
        let (w, k) = (config.word_dim, config.d_k);
        let a = Model::new(
            config.clone(),
            random_table(N_WORDS, w, 1),
            random_table(N_ENTITIES, k, 2),
        )
        .unwrap();
        let b = Model::new(
            config,
            random_table(N_WORDS, w, 1),
            random_table(N_ENTITIES, k, 99),
        )
        .unwrap();
        let pa: Vec<f64> = a.predict(&inst).unwrap().iter().map(|o| o.prob).collect();
        let pb: Vec<f64> = b.predict(&inst).unwrap().iter().map(|o| o.prob).collect();
        assert_eq!(pa, pb, "{variant}");
    }
}

#[test]
fn knowledge_changes_predictions() {
    let inst = tiny_instance();
    for variant in Variant::ALL {
        let config = tiny_config(variant);
        let (w, k) = (config.word_dim, config.d_k);
        let a = Model::new(
            config.clone(),
            random_table(N_WORDS, w, 1),
            random_table(N_ENTITIES, k, 2),
        )
        .unwrap();
        let b = Model::new(
            config,
            random_table(N_WORDS, w, 1),
            random_table(N_ENTITIES, k, 99),
        )
        .unwrap();
        assert_ne!(
            a.predict(&inst).unwrap()[0].prob,
            b.predict(&inst).unwrap()[0].prob,
            "{variant}"
        );
    }
}

#[test]
fn table_shapes_are_checked() {
    let config = tiny_config(Variant::Ckann);
    assert!(matches!(
        Model::new(
            config.clone(),
            random_table(N_WORDS, 4, 1),
            random_table(N_ENTITIES, 6, 2)
        ),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(
        Model::new(
            config,
            random_table(N_WORDS, 5, 1),
            random_table(N_ENTITIES, 7, 2)
        ),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn dropout_only_in_training() {
    let mut config = tiny_config(Variant::KannCo);
    config.dropout = 0.5;
    let model = tiny_model(config);
    let inst = tiny_instance();
    let a = model.predict(&inst).unwrap();
    let b = model.predict(&inst).unwrap();
    assert_eq!(a[0].prob, b[0].prob);

    let value = |seed| {
        let mut g = Graph::training(&model.store, seed);
        let l = model.batch_loss(&mut g, &[&inst]).unwrap();
        assert_eq!(l.pairs, 2);
        g.value(l.total).item()
    };
    assert_eq!(value(3), value(3));
    assert_ne!(value(3), value(4));
}
