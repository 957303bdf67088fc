//! In-memory knowledge graph and surface-form alias dictionary.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Name ⇄ index table that assigns ids in order of first insertion.
#[derive(Debug, Clone, Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }
}

/// Directed triples with an undirected neighbor view.
///
/// Self-loop triples are stored but never appear in [`KnowledgeGraph::neighbors`].
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    neighbor_index: Vec<BTreeSet<EntityId>>,
}

fn is_comment_or_blank(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from `(head, relation, tail)` name triples.
    pub fn from_named<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let mut kg = KnowledgeGraph::new();
        for (h, r, t) in triples {
            kg.insert(h, r, t);
        }
        kg
    }

    pub fn add_entity(&mut self, name: &str) -> EntityId {
        let id = EntityId(self.entities.intern(name));
        if self.neighbor_index.len() <= id.index() {
            self.neighbor_index.resize(id.index() + 1, BTreeSet::new());
        }
        id
    }

    pub fn add_relation(&mut self, name: &str) -> RelationId {
        RelationId(self.relations.intern(name))
    }

    /// Inserts a triple by name; returns `false` for a duplicate.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.add_entity(head);
        let r = self.add_relation(relation);
        let t = self.add_entity(tail);
        self.insert_ids(Triple {
            head: h,
            relation: r,
            tail: t,
        })
    }

    fn insert_ids(&mut self, triple: Triple) -> bool {
        if !self.triple_set.insert(triple) {
            return false;
        }
        self.triples.push(triple);
        if triple.head != triple.tail {
            self.neighbor_index[triple.head.index()].insert(triple.tail);
            self.neighbor_index[triple.tail.index()].insert(triple.head);
        }
        true
    }

    /// Loads a tab-separated `head\trelation\ttail` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kg = KnowledgeGraph::new();
        for (i, line) in text.lines().enumerate() {
            if is_comment_or_blank(line) {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::MalformedTriple(i + 1));
            }
            kg.insert(fields[0], fields[1], fields[2]);
        }
        Ok(kg)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail)
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn n_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        e.index() < self.n_entities()
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entities.names[e.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relations.names[r.index()]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities.names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations.names
    }

    /// Undirected one-hop neighborhood of `e`, excluding `e`.
    pub fn neighbors(&self, e: EntityId) -> Result<&BTreeSet<EntityId>> {
        self.neighbor_index
            .get(e.index())
            .ok_or_else(|| Error::UnknownEntity(format!("#{}", e.0)))
    }

    pub fn neighbors_by_name(&self, name: &str) -> Result<&BTreeSet<EntityId>> {
        let e = self
            .entity(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))?;
        self.neighbors(e)
    }

    pub fn adjacent(&self, a: EntityId, b: EntityId) -> bool {
        self.neighbor_index
            .get(a.index())
            .is_some_and(|n| n.contains(&b))
    }

    /// Keeps `⌊keep_ratio · n⌋` triples drawn uniformly without replacement.
    ///
    /// Entity and relation indices are preserved so embedding tables stay
    /// aligned; kept triples retain their original order.
    pub fn subsample(&self, keep_ratio: f64, seed: u64) -> Result<Self> {
        if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "keep_ratio {keep_ratio} not in (0, 1]"
            )));
        }
        let n = self.triples.len();
        let keep = ((keep_ratio * n as f64) + 1e-9).floor() as usize;
        let keep = keep.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = sample(&mut rng, n, keep).into_vec();
        chosen.sort_unstable();

        let mut out = KnowledgeGraph {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            triples: Vec::with_capacity(keep),
            triple_set: HashSet::with_capacity(keep),
            neighbor_index: vec![BTreeSet::new(); self.n_entities()],
        };
        for i in chosen {
            out.insert_ids(self.triples[i]);
        }
        Ok(out)
    }
}

/// One entity candidate for a surface form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasCandidate {
    pub entity: EntityId,
    pub prior: f64,
}

/// Lowercased surface string → candidates in non-increasing prior order.
#[derive(Debug, Clone, Default)]
pub struct AliasDictionary {
    entries: HashMap<String, Vec<AliasCandidate>>,
}

impl AliasDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, entity: EntityId, prior: f64) {
        let list = self.entries.entry(surface.to_lowercase()).or_default();
        list.push(AliasCandidate { entity, prior });
        // stable: equal priors keep insertion order
        list.sort_by(|a, b| b.prior.total_cmp(&a.prior));
    }

    /// Loads a tab-separated `surface\tentity\tprior` file against `kg`.
    pub fn load(path: &Path, kg: &KnowledgeGraph) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, kg)
    }

    pub fn parse(text: &str, kg: &KnowledgeGraph) -> Result<Self> {
        let mut dict = AliasDictionary::new();
        for (i, line) in text.lines().enumerate() {
            if is_comment_or_blank(line) {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedAlias {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[0].trim().is_empty() {
                return Err(malformed("expected surface, entity and prior"));
            }
            let prior: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| malformed("prior is not a number"))?;
            if !(0.0..=1.0).contains(&prior) {
                return Err(malformed("prior outside [0, 1]"));
            }
            let entity = kg
                .entity(fields[1])
                .ok_or_else(|| Error::UnknownEntity(fields[1].to_string()))?;
            dict.insert(fields[0].trim(), entity, prior);
        }
        Ok(dict)
    }

    pub fn to_tsv(&self, kg: &KnowledgeGraph) -> String {
        let mut surfaces: Vec<&String> = self.entries.keys().collect();
        surfaces.sort();
        let mut out = String::new();
        for s in surfaces {
            for c in &self.entries[s] {
                let _ = writeln!(out, "{s}\t{}\t{}", kg.entity_name(c.entity), c.prior);
            }
        }
        out
    }

    pub fn lookup(&self, surface: &str) -> Option<&[AliasCandidate]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::parse("a\tr\tb\nb\tr\tc\n").unwrap()
    }

    #[test]
    fn load_counts() {
        let kg = chain();
        assert_eq!(
            (kg.n_entities(), kg.n_relations(), kg.n_triples()),
            (3, 1, 2)
        );
        let empty = KnowledgeGraph::parse("").unwrap();
        assert_eq!((empty.n_entities(), empty.n_triples()), (0, 0));
        assert!(matches!(
            KnowledgeGraph::parse("a\tr\n"),
            Err(Error::MalformedTriple(1))
        ));
        let dup = KnowledgeGraph::parse("# header\na\tr\tb\na\tr\tb\n").unwrap();
        assert_eq!(dup.n_triples(), 1);
    }

    #[test]
    fn neighbor_queries() {
        let kg = chain();
        let b = kg.neighbors_by_name("b").unwrap();
        let names: Vec<&str> = b.iter().map(|&e| kg.entity_name(e)).collect();
        assert_eq!(names, ["a", "c"]);

        let looped = KnowledgeGraph::parse("a\tr\ta\n").unwrap();
        assert!(looped.neighbors_by_name("a").unwrap().is_empty());
        assert_eq!(looped.n_triples(), 1);

        assert!(matches!(
            kg.neighbors_by_name("d"),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn alias_loading() {
        let kg = KnowledgeGraph::parse("city_boston\tin\tusa\nperson_boston\tborn\tusa\n").unwrap();
        let dict = AliasDictionary::parse(
            "boston\tperson_boston\t0.2\nBoston\tcity_boston\t0.8\n",
            &kg,
        )
        .unwrap();
        let entry = dict.lookup("boston").unwrap();
        assert_eq!(entry.len(), 2);
        assert_eq!(kg.entity_name(entry[0].entity), "city_boston");
        assert_eq!(entry[0].prior, 0.8);

        assert!(matches!(
            AliasDictionary::parse("boston\tcity_boston\t1.5\n", &kg),
            Err(Error::MalformedAlias { line: 1, .. })
        ));
        assert!(matches!(
            AliasDictionary::parse("paris\tcity_paris\t0.5\n", &kg),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn subsample_examples() {
        let text: String = (0..10).map(|i| format!("e{i}\tr\te{}\n", i + 1)).collect();
        let kg = KnowledgeGraph::parse(&text).unwrap();
        let full = kg.subsample(1.0, 3).unwrap();
        assert_eq!(full.triples(), kg.triples());
        let half = kg.subsample(0.5, 3).unwrap();
        assert_eq!(half.n_triples(), 5);
        assert!(half.triples().iter().all(|t| kg.contains(t)));
        assert_eq!(half.n_entities(), kg.n_entities());
        assert_eq!(kg.subsample(0.5, 3).unwrap().triples(), half.triples());
        assert!(kg.subsample(0.0, 3).is_err());
    }

    fn arb_kg() -> impl Strategy<Value = KnowledgeGraph> {
        prop::collection::vec((0u8..12, 0u8..3, 0u8..12), 0..40).prop_map(|ts| {
            let mut kg = KnowledgeGraph::new();
            for (h, r, t) in ts {
                kg.insert(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
            }
            kg
        })
    }

    proptest! {
        #[test]
        fn neighbor_index_is_symmetric_and_loop_free(kg in arb_kg()) {
            for u in 0..kg.n_entities() as u32 {
                let u = EntityId(u);
                let nu = kg.neighbors(u).unwrap();
                prop_assert!(!nu.contains(&u));
                for &v in nu {
                    prop_assert!(kg.neighbors(v).unwrap().contains(&u));
                }
            }
        }

        #[test]
        fn save_load_preserves_triples(kg in arb_kg()) {
            let back = KnowledgeGraph::parse(&kg.to_tsv()).unwrap();
            let names = |g: &KnowledgeGraph| -> BTreeSet<(String, String, String)> {
                g.triples().iter().map(|t| (
                    g.entity_name(t.head).to_string(),
                    g.relation_name(t.relation).to_string(),
                    g.entity_name(t.tail).to_string(),
                )).collect()
            };
            prop_assert_eq!(names(&kg), names(&back));
        }

        #[test]
        fn subsample_is_exact_subset(kg in arb_kg(), ratio in 0.01f64..=1.0, seed in any::<u64>()) {
            let sub = kg.subsample(ratio, seed).unwrap();
            let expected = (ratio * kg.n_triples() as f64 + 1e-9).floor() as usize;
            prop_assert_eq!(sub.n_triples(), expected);
            prop_assert!(sub.triples().iter().all(|t| kg.contains(t)));
        }
    }
}
