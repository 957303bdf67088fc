//! Per-sentence entity graphs and their normalized GCN operators.
//!
//! Original nodes are the sentence's mention-level entities, in order. Their
//! one-hop KG neighbors are appended after them. Window edges connect original
//! nodes that fall inside a run of `p` consecutive mentions.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};

pub const DEFAULT_MAX_NEIGHBORS: usize = 16;

/// Window size used for new edges among original nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Window {
    Two,
    Three,
    /// The whole sentence.
    All,
}

impl Window {
    pub const ALL_VARIANTS: [Window; 3] = [Window::Two, Window::Three, Window::All];

    /// Largest index gap joined by a window edge among `n` originals.
    fn reach(self, n: usize) -> usize {
        let p = match self {
            Window::Two => 2,
            Window::Three => 3,
            Window::All => n,
        };
        if n < p {
            n
        } else {
            p - 1
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Two => "2",
            Window::Three => "3",
            Window::All => "L",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" => Ok(Window::Two),
            "3" => Ok(Window::Three),
            "L" => Ok(Window::All),
            _ => Err(Error::Format(format!("unknown window `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Original,
    Neighbor,
    /// Mentioned entity without an index entry in the KG.
    Placeholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Reserved from the KG.
    Original,
    /// Added by the window rule.
    New,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityGraph {
    pub window: Window,
    pub nodes: Vec<(EntityId, NodeRole)>,
    /// Keys are node-index pairs with `i < j`.
    pub edges: BTreeMap<(usize, usize), EdgeKind>,
}

impl EntityGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of nodes coming from the sentence (placeholders included).
    pub fn n_original(&self) -> usize {
        self.nodes
            .iter()
            .take_while(|(_, r)| *r != NodeRole::Neighbor)
            .count()
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.keys().copied().collect()
    }

    pub fn new_edges(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .iter()
            .filter(|(_, k)| **k == EdgeKind::New)
            .map(|(e, _)| *e)
            .collect()
    }

    pub fn node_entities(&self) -> Vec<EntityId> {
        self.nodes.iter().map(|(e, _)| *e).collect()
    }

    fn connect(&mut self, a: usize, b: usize, kind: EdgeKind) {
        if a != b {
            self.edges.entry((a.min(b), a.max(b))).or_insert(kind);
        }
    }
}

/// Builds the entity graph for one sentence.
pub fn build_entity_graph(
    mention_level: &[EntityId],
    kg: &KnowledgeGraph,
    window: Window,
    max_neighbors: usize,
) -> Result<EntityGraph> {
    if mention_level.is_empty() {
        return Err(Error::EmptyKnowledgeSequence);
    }
    let mut graph = EntityGraph {
        window,
        nodes: mention_level
            .iter()
            .map(|&e| {
                let role = if kg.has_entity(e) {
                    NodeRole::Original
                } else {
                    NodeRole::Placeholder
                };
                (e, role)
            })
            .collect(),
        edges: BTreeMap::new(),
    };
    let n = mention_level.len();
    let known: Vec<usize> = (0..n)
        .filter(|&i| graph.nodes[i].1 == NodeRole::Original)
        .collect();

    for (x, &i) in known.iter().enumerate() {
        for &j in &known[x + 1..] {
            if kg.adjacent(mention_level[i], mention_level[j]) {
                graph.connect(i, j, EdgeKind::Original);
            }
        }
    }

    let originals: BTreeSet<EntityId> = known.iter().map(|&i| mention_level[i]).collect();
    let mut neighbor_index: BTreeMap<EntityId, usize> = BTreeMap::new();
    for &i in &known {
        let chosen = kg
            .neighbors(mention_level[i])?
            .iter()
            .filter(|e| !originals.contains(e))
            .take(max_neighbors);
        for &e in chosen {
            if let Entry::Vacant(slot) = neighbor_index.entry(e) {
                slot.insert(graph.nodes.len());
                graph.nodes.push((e, NodeRole::Neighbor));
            }
        }
    }
    for (&e, &node) in &neighbor_index {
        for &i in &known {
            if kg.adjacent(e, mention_level[i]) {
                graph.connect(i, node, EdgeKind::Original);
            }
        }
    }

    let reach = window.reach(n);
    for i in 0..n {
        for j in i + 1..n.min(i + reach + 1) {
            graph.connect(i, j, EdgeKind::New);
        }
    }
    Ok(graph)
}

/// The three window variants over one shared node set.
pub fn build_variants(
    mention_level: &[EntityId],
    kg: &KnowledgeGraph,
    max_neighbors: usize,
) -> Result<[EntityGraph; 3]> {
    let [a, b, c] = Window::ALL_VARIANTS;
    Ok([
        build_entity_graph(mention_level, kg, a, max_neighbors)?,
        build_entity_graph(mention_level, kg, b, max_neighbors)?,
        build_entity_graph(mention_level, kg, c, max_neighbors)?,
    ])
}

/// `D^{-1/2} (A + I) D^{-1/2}` as a dense matrix.
pub fn normalized_operator(graph: &EntityGraph) -> Tensor {
    let n = graph.n_nodes();
    let mut a = Tensor::identity(n);
    for &(i, j) in graph.edges.keys() {
        a.set(i, j, 1.0);
        a.set(j, i, 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / a.row(i).iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    a
}

fn role_code(r: NodeRole) -> char {
    match r {
        NodeRole::Original => 'o',
        NodeRole::Neighbor => 'n',
        NodeRole::Placeholder => 'x',
    }
}

/// Serializes graphs as one tab-separated line each:
/// `sentence_id  p  nodes  edges`, where nodes are `<entity><role>` with
/// role `o`, `n` or `x`, and edges are `<i>-<j><kind>` with kind `o` or `n`.
pub fn write_cache(path: &Path, records: &[(String, EntityGraph)]) -> Result<()> {
    let mut out = String::from("# kaqa entity-graph cache 1\n");
    for (id, g) in records {
        let nodes: Vec<String> = g
            .nodes
            .iter()
            .map(|(e, r)| format!("{}{}", e.0, role_code(*r)))
            .collect();
        let edges: Vec<String> = g
            .edges
            .iter()
            .map(|(&(i, j), k)| {
                format!(
                    "{i}-{j}{}",
                    if *k == EdgeKind::Original { 'o' } else { 'n' }
                )
            })
            .collect();
        let _ = writeln!(
            out,
            "{id}\t{}\t{}\t{}",
            g.window,
            nodes.join(" "),
            edges.join(" ")
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<Vec<(String, EntityGraph)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| Error::Format(format!("{}:{line}: {what}", path.display()));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(i + 1, "expected 4 fields"));
        }
        let window: Window = fields[1].parse()?;
        let nodes = fields[2]
            .split_whitespace()
            .map(|tok| {
                let (num, role) = tok.split_at(tok.len() - 1);
                let role = match role {
                    "o" => NodeRole::Original,
                    "n" => NodeRole::Neighbor,
                    "x" => NodeRole::Placeholder,
                    _ => return Err(bad(i + 1, "bad node role")),
                };
                let e = num.parse().map_err(|_| bad(i + 1, "bad node id"))?;
                Ok((EntityId(e), role))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut edges = BTreeMap::new();
        for tok in fields[3].split_whitespace() {
            let (pair, kind) = tok.split_at(tok.len() - 1);
            let kind = match kind {
                "o" => EdgeKind::Original,
                "n" => EdgeKind::New,
                _ => return Err(bad(i + 1, "bad edge kind")),
            };
            let (a, b) = pair.split_once('-').ok_or_else(|| bad(i + 1, "bad edge"))?;
            let a: usize = a.parse().map_err(|_| bad(i + 1, "bad edge endpoint"))?;
            let b: usize = b.parse().map_err(|_| bad(i + 1, "bad edge endpoint"))?;
            if a >= b || b >= nodes.len() {
                return Err(bad(i + 1, "edge endpoint out of range"));
            }
            edges.insert((a, b), kind);
        }
        records.push((
            fields[0].to_string(),
            EntityGraph {
                window,
                nodes,
                edges,
            },
        ));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ids(kg: &KnowledgeGraph, names: &[&str]) -> Vec<EntityId> {
        names.iter().map(|n| kg.entity(n).unwrap()).collect()
    }

    fn bare(n: usize) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for i in 1..=n {
            kg.add_entity(&i.to_string());
        }
        kg
    }

    #[test]
    fn window_examples() {
        let kg = bare(4);
        let m = ids(&kg, &["1", "2", "3", "4"]);
        let g2 = build_entity_graph(&m, &kg, Window::Two, 16).unwrap();
        assert_eq!(g2.new_edges(), BTreeSet::from([(0, 1), (1, 2), (2, 3)]));
        let gl = build_entity_graph(&m, &kg, Window::All, 16).unwrap();
        assert_eq!(gl.new_edges().len(), 6);

        let m = ids(&kg, &["2", "3", "4"]);
        let g3 = build_entity_graph(&m, &kg, Window::Three, 16).unwrap();
        assert_eq!(g3.new_edges(), BTreeSet::from([(0, 1), (1, 2), (0, 2)]));

        // fewer originals than p: clique
        let m = ids(&kg, &["1", "2"]);
        let g3 = build_entity_graph(&m, &kg, Window::Three, 16).unwrap();
        assert_eq!(g3.new_edges(), BTreeSet::from([(0, 1)]));

        assert!(matches!(
            build_entity_graph(&[], &kg, Window::Two, 16),
            Err(Error::EmptyKnowledgeSequence)
        ));
    }

    #[test]
    fn neighbors_and_placeholders() {
        let kg =
            KnowledgeGraph::parse("a\tr\tb\na\tr\tn1\nn1\tr\tn2\nb\tr\tn2\nc\tr\tn3\n").unwrap();
        let m = vec![
            kg.entity("a").unwrap(),
            kg.entity("c").unwrap(),
            EntityId(999),
        ];
        let g = build_entity_graph(&m, &kg, Window::Two, 16).unwrap();
        assert_eq!(g.n_original(), 3);
        assert_eq!(g.nodes[2].1, NodeRole::Placeholder);
        let names: Vec<&str> = g.nodes[3..]
            .iter()
            .map(|(e, _)| kg.entity_name(*e))
            .collect();
        assert_eq!(names, ["b", "n1", "n3"]);
        // n1-n2 is not reserved because neither is an original
        assert_eq!(g.edges[&(0, 3)], EdgeKind::Original);
        assert_eq!(g.edges[&(0, 4)], EdgeKind::Original);
        assert_eq!(g.edges[&(1, 5)], EdgeKind::Original);
        assert_eq!(g.edges[&(0, 1)], EdgeKind::New);
        assert_eq!(g.edges[&(1, 2)], EdgeKind::New);
        assert_eq!(g.edges.len(), 5);

        let capped = build_entity_graph(&m, &kg, Window::Two, 1).unwrap();
        let names: Vec<&str> = capped.nodes[3..]
            .iter()
            .map(|(e, _)| kg.entity_name(*e))
            .collect();
        assert_eq!(names, ["b", "n3"]);
    }

    #[test]
    fn kg_edge_between_originals_keeps_original_kind() {
        let kg = KnowledgeGraph::parse("a\tr\tb\n").unwrap();
        let m = ids(&kg, &["a", "b"]);
        let g = build_entity_graph(&m, &kg, Window::Two, 16).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[&(0, 1)], EdgeKind::Original);
    }

    #[test]
    fn operator_examples() {
        let kg = bare(2);
        let one = build_entity_graph(&ids(&kg, &["1"]), &kg, Window::Two, 16).unwrap();
        assert_eq!(normalized_operator(&one), Tensor::identity(1));
        let two = build_entity_graph(&ids(&kg, &["1", "2"]), &kg, Window::Two, 16).unwrap();
        let op = normalized_operator(&two);
        assert!(op.data().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn cache_roundtrip() {
        let kg = KnowledgeGraph::parse("a\tr\tb\na\tr\tn1\nc\tr\tn3\n").unwrap();
        let m = vec![
            kg.entity("a").unwrap(),
            kg.entity("c").unwrap(),
            EntityId(77),
        ];
        let records: Vec<(String, EntityGraph)> = build_variants(&m, &kg, 16)
            .unwrap()
            .into_iter()
            .map(|g| ("q1".to_string(), g))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graphs.tsv");
        write_cache(&path, &records).unwrap();
        assert_eq!(read_cache(&path).unwrap(), records);

        fs::write(&path, "q\t2\t1o 2o\t0-5n\n").unwrap();
        assert!(matches!(read_cache(&path), Err(Error::Format(_))));
    }

    fn oracle(n: usize, window: Window) -> BTreeSet<(usize, usize)> {
        let p = match window {
            Window::Two => 2,
            Window::Three => 3,
            Window::All => n,
        };
        let mut out = BTreeSet::new();
        if n < p {
            for i in 0..n {
                for j in i + 1..n {
                    out.insert((i, j));
                }
            }
            return out;
        }
        for start in 0..=n - p {
            for i in start..start + p {
                for j in i + 1..start + p {
                    out.insert((i, j));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn window_edges_match_enumeration(n in 1usize..9) {
            let kg = bare(n);
            let m: Vec<EntityId> = (0..n as u32).map(EntityId).collect();
            let mut prev = BTreeSet::new();
            for w in Window::ALL_VARIANTS {
                let g = build_entity_graph(&m, &kg, w, 16).unwrap();
                let edges = g.new_edges();
                prop_assert_eq!(&edges, &oracle(n, w));
                prop_assert!(prev.is_subset(&edges));
                prev = edges;
            }
        }

        #[test]
        fn operator_symmetric_nonnegative(
            n in 1usize..7,
            extra in prop::collection::vec((0u32..12, 0u32..12), 0..15),
        ) {
            let mut kg = bare(12);
            for (a, b) in extra {
                kg.insert(&(a + 1).to_string(), "r", &(b + 1).to_string());
            }
            let m: Vec<EntityId> = (0..n as u32).map(EntityId).collect();
            let variants = build_variants(&m, &kg, 16).unwrap();
            for g in &variants {
                prop_assert_eq!(g.node_entities(), variants[0].node_entities());
                let op = normalized_operator(g);
                prop_assert!(op.max_abs_diff(&op.transpose()) <= 1e-12);
                prop_assert!(op.data().iter().all(|v| *v >= 0.0));
            }
        }
    }
}
