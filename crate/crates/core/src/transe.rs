//! TransE entity and relation embeddings.
//!
//! A triple `(h, r, t)` is scored by the translation distance `‖h + r − t‖`.
//! Training minimizes the margin ranking loss
//! `Σ max(0, γ + d(h, r, t) − d(h′, r, t′))` against one corrupted triple
//! per positive, with mini-batch gradient descent and entity rows projected
//! back to the unit sphere after every epoch.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub norm: Norm,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: 64,
            margin: 1.0,
            norm: Norm::L2,
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TransEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("transe dim must be ≥ 1".into()));
        }
        if self.margin <= 0.0 {
            return Err(Error::Config("transe margin must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("transe batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Entity and relation vectors, one row per index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub entities: Tensor,
    pub relations: Tensor,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.entities.cols()
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        self.entities.row(e.index())
    }

    /// Writes the `n_entities n_relations dim` header followed by one row
    /// per entity and then per relation.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "{} {} {}\n",
            self.entities.rows(),
            self.relations.rows(),
            self.dim()
        );
        for table in [&self.entities, &self.relations] {
            for r in 0..table.rows() {
                let row: Vec<String> = table.row(r).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Loads a table and checks it against the index sizes of `kg`.
    pub fn load(path: &Path, kg: &KnowledgeGraph) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Format("embedding file is empty".into()))?
            .split_whitespace()
            .map(|f| {
                f.parse()
                    .map_err(|_| Error::Format(format!("bad header field `{f}`")))
            })
            .collect::<Result<_>>()?;
        let [n_ent, n_rel, dim] = header[..] else {
            return Err(Error::Format(
                "header must be `n_entities n_relations dim`".into(),
            ));
        };
        if n_ent != kg.n_entities() || n_rel != kg.n_relations() {
            return Err(Error::Format(format!(
                "embedding file has {n_ent} entities / {n_rel} relations, graph has {} / {}",
                kg.n_entities(),
                kg.n_relations()
            )));
        }
        let mut read = |n: usize| -> Result<Tensor> {
            let mut data = Vec::with_capacity(n * dim);
            for _ in 0..n {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Format("embedding file truncated".into()))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|f| {
                        f.parse()
                            .map_err(|_| Error::Format(format!("bad value `{f}`")))
                    })
                    .collect::<Result<_>>()?;
                if row.len() != dim {
                    return Err(Error::Format(format!(
                        "row has {} values, header says dim {dim}",
                        row.len()
                    )));
                }
                data.extend(row);
            }
            Tensor::from_vec(n, dim, data)
        };
        let entities = read(n_ent)?;
        let relations = read(n_rel)?;
        if lines.next().is_some() {
            return Err(Error::Format("embedding file has trailing rows".into()));
        }
        Ok(EmbeddingTable {
            entities,
            relations,
        })
    }
}

/// `‖h + r − t‖` under `norm`.
pub fn transe_distance(h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> Result<f64> {
    if h.len() != r.len() || r.len() != t.len() {
        return Err(Error::DimensionMismatch(format!(
            "transe vectors of length {}, {}, {}",
            h.len(),
            r.len(),
            t.len()
        )));
    }
    let diffs = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
    Ok(match norm {
        Norm::L1 => diffs.map(f64::abs).sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    })
}

fn normalize_rows(t: &mut Tensor) {
    for r in 0..t.rows() {
        let row = t.row_mut(r);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Uniform `[−6/√d, 6/√d]` entries; entity rows then scaled to unit L2 norm.
pub fn init_embeddings(kg: &KnowledgeGraph, config: &TransEConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    if kg.n_entities() == 0 {
        return Err(Error::Config(
            "cannot embed an empty knowledge graph".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (entities, relations) = raw_init(kg, config.dim, &mut rng);
    let mut entities = entities;
    normalize_rows(&mut entities);
    Ok(EmbeddingTable {
        entities,
        relations,
    })
}

fn raw_init(kg: &KnowledgeGraph, dim: usize, rng: &mut impl Rng) -> (Tensor, Tensor) {
    let bound = 6.0 / (dim as f64).sqrt();
    let mut draw = |rows: usize| {
        let data = (0..rows * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Tensor::from_vec(rows, dim, data).expect("shape")
    };
    let e = draw(kg.n_entities());
    let r = draw(kg.n_relations());
    (e, r)
}

/// Corrupts the head or tail (fair coin) with a uniform entity, redrawing
/// up to 100 times while the corruption is itself a known triple.
pub fn negative_sample(triple: &Triple, kg: &KnowledgeGraph, rng: &mut impl Rng) -> Triple {
    let n = kg.n_entities() as u32;
    let mut last = *triple;
    for _ in 0..100 {
        let e = EntityId(rng.gen_range(0..n));
        last = if rng.gen_bool(0.5) {
            Triple { head: e, ..*triple }
        } else {
            Triple { tail: e, ..*triple }
        };
        if !kg.contains(&last) {
            return last;
        }
    }
    last
}

#[derive(Debug, Clone)]
pub struct TransETrace {
    /// Mean margin loss per training triple, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Adds `scale · ∂d/∂(h + r − t)` for the diff vector `diff`.
fn distance_grad(diff: &[f64], norm: Norm) -> Vec<f64> {
    match norm {
        Norm::L1 => diff
            .iter()
            .map(|d| d.signum() * (*d != 0.0) as u8 as f64)
            .collect(),
        Norm::L2 => {
            let n = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n == 0.0 {
                vec![0.0; diff.len()]
            } else {
                diff.iter().map(|d| d / n).collect()
            }
        }
    }
}

pub fn train_transe(
    kg: &KnowledgeGraph,
    config: &TransEConfig,
) -> Result<(EmbeddingTable, TransETrace)> {
    let mut table = init_embeddings(kg, config)?;
    let mut trace = TransETrace {
        epoch_loss: Vec::with_capacity(config.epochs),
    };
    if config.epochs == 0 {
        return Ok((table, trace));
    }
    if kg.n_triples() == 0 {
        return Err(Error::Config("cannot train TransE without triples".into()));
    }
    // Separate stream from initialization so epochs=0 is exactly the init.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_616e_7365);
    let dim = config.dim;
    let mut order: Vec<usize> = (0..kg.n_triples()).collect();
    let diff = |tab: &EmbeddingTable, t: &Triple| -> Vec<f64> {
        let h = tab.entities.row(t.head.index());
        let r = tab.relations.row(t.relation.index());
        let tl = tab.entities.row(t.tail.index());
        (0..dim).map(|k| h[k] + r[k] - tl[k]).collect()
    };
    let dist = |d: &[f64]| -> f64 {
        match config.norm {
            Norm::L1 => d.iter().map(|v| v.abs()).sum(),
            Norm::L2 => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    };

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut g_ent = Tensor::zeros(table.entities.rows(), dim);
            let mut g_rel = Tensor::zeros(table.relations.rows(), dim);
            for &i in batch {
                let pos = kg.triples()[i];
                let neg = negative_sample(&pos, kg, &mut rng);
                let dp = diff(&table, &pos);
                let dn = diff(&table, &neg);
                let loss = config.margin + dist(&dp) - dist(&dn);
                if loss <= 0.0 {
                    continue;
                }
                total += loss;
                let gp = distance_grad(&dp, config.norm);
                let gn = distance_grad(&dn, config.norm);
                for k in 0..dim {
                    g_ent.row_mut(pos.head.index())[k] += gp[k];
                    g_ent.row_mut(pos.tail.index())[k] -= gp[k];
                    g_rel.row_mut(pos.relation.index())[k] += gp[k] - gn[k];
                    g_ent.row_mut(neg.head.index())[k] -= gn[k];
                    g_ent.row_mut(neg.tail.index())[k] += gn[k];
                }
            }
            let lr = config.learning_rate;
            for (v, g) in table.entities.data_mut().iter_mut().zip(g_ent.data()) {
                *v -= lr * g;
            }
            for (v, g) in table.relations.data_mut().iter_mut().zip(g_rel.data()) {
                *v -= lr * g;
            }
        }
        normalize_rows(&mut table.entities);
        let mean = total / kg.n_triples() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("TransE epoch loss".into()));
        }
        trace.epoch_loss.push(mean);
    }
    Ok((table, trace))
}

/// Filtered rank of the true tail of every triple: one plus the number of
/// entities `e` with `d(h, r, e) < d(h, r, t)` and `(h, r, e)` not a known triple.
pub fn filtered_tail_ranks(
    table: &EmbeddingTable,
    kg: &KnowledgeGraph,
    norm: Norm,
) -> Result<Vec<usize>> {
    kg.triples()
        .iter()
        .map(|t| {
            let h = table.entities.row(t.head.index());
            let r = table.relations.row(t.relation.index());
            let target = transe_distance(h, r, table.entities.row(t.tail.index()), norm)?;
            let mut rank = 1;
            for e in 0..kg.n_entities() as u32 {
                let cand = Triple {
                    tail: EntityId(e),
                    ..*t
                };
                if cand.tail == t.tail || kg.contains(&cand) {
                    continue;
                }
                if transe_distance(h, r, table.entities.row(e as usize), norm)? < target {
                    rank += 1;
                }
            }
            Ok(rank)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toy() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for i in 0..20 {
            for (k, s) in [1, 2, 3].iter().enumerate() {
                if i + s < 20 {
                    kg.insert(&format!("e{i}"), &format!("r{k}"), &format!("e{}", i + s));
                }
            }
        }
        kg
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            transe_distance(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], Norm::L2).unwrap(),
            0.0
        );
        assert_eq!(
            transe_distance(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0], Norm::L2).unwrap(),
            5.0
        );
        assert_eq!(
            transe_distance(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0], Norm::L1).unwrap(),
            7.0
        );
        assert!(matches!(
            transe_distance(&[0.0], &[0.0, 1.0], &[0.0, 1.0], Norm::L1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn init_contract() {
        let kg = toy();
        let config = TransEConfig {
            dim: 4,
            ..TransEConfig::default()
        };
        let table = init_embeddings(&kg, &config).unwrap();
        for r in 0..table.entities.rows() {
            let n: f64 = table
                .entities
                .row(r)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((n - 1.0).abs() <= 1e-9);
        }
        assert_eq!(init_embeddings(&kg, &config).unwrap(), table);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (raw_e, raw_r) = raw_init(&kg, 4, &mut rng);
        let bound = 6.0 / 2.0;
        assert!(raw_e
            .data()
            .iter()
            .chain(raw_r.data())
            .all(|v| v.abs() <= bound));
        assert_eq!(raw_r, table.relations);
    }

    #[test]
    fn negative_sample_rules() {
        let kg = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in kg.triples() {
            let n = negative_sample(t, &kg, &mut rng);
            assert_eq!(n.relation, t.relation);
            assert!((n.head != t.head) ^ (n.tail != t.tail) || n == *t);
            assert!(!kg.contains(&n));
        }

        // every corruption of (a, r, b) is itself a true triple
        let kg = KnowledgeGraph::parse("a\tr\ta\na\tr\tb\nb\tr\ta\nb\tr\tb\n").unwrap();
        let t = kg.triples()[1];
        let n = negative_sample(&t, &kg, &mut rng);
        assert_eq!(n.relation, t.relation);
        assert!(kg.contains(&n));
    }

    #[test]
    fn zero_epochs_is_init() {
        let kg = toy();
        let config = TransEConfig {
            dim: 8,
            epochs: 0,
            ..TransEConfig::default()
        };
        let (table, trace) = train_transe(&kg, &config).unwrap();
        assert!(trace.epoch_loss.is_empty());
        assert_eq!(table, init_embeddings(&kg, &config).unwrap());
    }

    #[test]
    fn training_keeps_unit_entities_and_is_deterministic() {
        let kg = toy();
        let config = TransEConfig {
            dim: 8,
            epochs: 5,
            batch_size: 16,
            ..TransEConfig::default()
        };
        let (table, trace) = train_transe(&kg, &config).unwrap();
        for r in 0..table.entities.rows() {
            let n: f64 = table
                .entities
                .row(r)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((n - 1.0).abs() <= 1e-6);
        }
        let (again, trace2) = train_transe(&kg, &config).unwrap();
        assert_eq!(trace.epoch_loss, trace2.epoch_loss);
        assert_eq!(table, again);
    }

    #[test]
    fn table_file_roundtrip_and_checks() {
        let kg = toy();
        let config = TransEConfig {
            dim: 5,
            ..TransEConfig::default()
        };
        let table = init_embeddings(&kg, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        table.save(&path).unwrap();
        let back = EmbeddingTable::load(&path, &kg).unwrap();
        assert!(back.entities.max_abs_diff(&table.entities) <= 1e-12);
        assert!(back.relations.max_abs_diff(&table.relations) <= 1e-12);

        let smaller = KnowledgeGraph::parse("e0\tr0\te1\n").unwrap();
        assert!(matches!(
            EmbeddingTable::load(&path, &smaller),
            Err(Error::Format(_))
        ));

        let text = fs::read_to_string(&path).unwrap();
        let bad = text.replacen(" 5\n", " 6\n", 1);
        fs::write(&path, bad).unwrap();
        assert!(matches!(
            EmbeddingTable::load(&path, &kg),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn l2_distance_reverse_symmetry(
            v in prop::collection::vec(-5.0f64..5.0, 9)
        ) {
            let (h, r, t) = (&v[0..3], &v[3..6], &v[6..9]);
            let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
            let a = transe_distance(h, r, t, Norm::L2).unwrap();
            let b = transe_distance(t, &neg_r, h, Norm::L2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
