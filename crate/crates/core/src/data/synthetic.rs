//! Planted-signal benchmark generator.
//!
//! Builds a random sparse KG whose entities carry unique pseudo-word surface
//! forms. Each question names a subject entity and a relation word. In a
//! planted question exactly one candidate names a KG neighbor of the subject
//! and carries the positive label. Every candidate shares the same number
//! of words with its question, so word overlap carries no label information.
//! Word vectors are random, so the only usable signal is the KG link.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{to_jsonl, RawCandidate, RawRecord};
use super::idf::stopwords;
use super::vocab::PretrainedVectors;
use crate::error::{Error, Result};
use crate::kg::{AliasDictionary, EntityId, KnowledgeGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_questions: usize,
    pub candidates_per_question: usize,
    /// Number of filler words.
    pub vocab_size: usize,
    /// Fraction of questions whose positive is decided by a KG link.
    pub signal_strength: f64,
    pub seed: u64,
    pub embedding_dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_entities: 200,
            n_relations: 5,
            n_questions: 500,
            candidates_per_question: 5,
            vocab_size: 300,
            signal_strength: 1.0,
            seed: 0,
            embedding_dim: 32,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("n_questions", self.n_questions),
            ("candidates_per_question", self.candidates_per_question),
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Spec(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Spec("signal_strength must lie in [0, 1]".into()));
        }
        if self.candidates_per_question < 2 {
            return Err(Error::Spec(
                "candidates_per_question must be at least 2".into(),
            ));
        }
        if self.n_entities < 4 * self.candidates_per_question {
            return Err(Error::Spec(format!(
                "n_entities must be at least 4 × candidates_per_question = {}",
                4 * self.candidates_per_question
            )));
        }
        if self.vocab_size < 12 {
            return Err(Error::Spec("vocab_size must be at least 12".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Vec<RawRecord>,
    pub dev: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
    pub kg: KnowledgeGraph,
    pub aliases: AliasDictionary,
    pub words: Vec<(String, Vec<f64>)>,
}

pub const FILES: [&str; 6] = [
    "train.jsonl",
    "dev.jsonl",
    "test.jsonl",
    "kg.tsv",
    "aliases.tsv",
    "words.txt",
];

impl SyntheticData {
    pub fn pretrained(&self) -> PretrainedVectors {
        PretrainedVectors {
            dim: self.words.first().map_or(0, |(_, v)| v.len()),
            vectors: self.words.iter().cloned().collect(),
        }
    }

    /// Writes the six files listed in [`FILES`] into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let words =
            PretrainedVectors::to_text(self.words.iter().map(|(w, v)| (w.as_str(), v.as_slice())));
        let contents = [
            to_jsonl(&self.train),
            to_jsonl(&self.dev),
            to_jsonl(&self.test),
            self.kg.to_tsv(),
            self.aliases.to_tsv(&self.kg),
            words,
        ];
        for (name, text) in FILES.iter().zip(contents) {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn pseudo_words(n: usize, rng: &mut impl Rng) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let banned = stopwords();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if !banned.contains(&w) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Builder<'a> {
    spec: &'a SyntheticSpec,
    rng: ChaCha8Rng,
    kg: KnowledgeGraph,
    surfaces: Vec<String>,
    fillers: Vec<String>,
}

impl Builder<'_> {
    fn entity(&self, e: EntityId) -> &str {
        &self.surfaces[e.index()]
    }

    /// Draws a degree-weighted entity that is neither `subject` nor one of
    /// its neighbors nor already in `taken`.
    fn distractor(&mut self, subject: EntityId, taken: &BTreeSet<EntityId>) -> EntityId {
        let ok = |kg: &KnowledgeGraph, e: EntityId| {
            e != subject && !kg.adjacent(subject, e) && !taken.contains(&e)
        };
        for _ in 0..1000 {
            let t = self.kg.triples()[self.rng.gen_range(0..self.kg.n_triples())];
            let e = if self.rng.gen_bool(0.5) {
                t.head
            } else {
                t.tail
            };
            if ok(&self.kg, e) {
                return e;
            }
        }
        loop {
            let e = EntityId(self.rng.gen_range(0..self.spec.n_entities as u32));
            if ok(&self.kg, e) {
                return e;
            }
        }
    }

    fn question(&mut self, idx: usize) -> RawRecord {
        let spec = self.spec;
        let planted = self.rng.gen_bool(spec.signal_strength);
        let connected: Vec<EntityId> = (0..spec.n_entities as u32)
            .map(EntityId)
            .filter(|&e| !self.kg.neighbors(e).expect("indexed").is_empty())
            .collect();
        let subject = *connected.choose(&mut self.rng).expect("KG has triples");

        let mut taken = BTreeSet::new();
        let mut mentioned = Vec::new();
        let relation = if planted {
            let incident: Vec<_> = self
                .kg
                .triples()
                .iter()
                .filter(|t| t.head == subject || t.tail == subject)
                .filter(|t| t.head != t.tail)
                .copied()
                .collect();
            let t = *incident
                .choose(&mut self.rng)
                .expect("subject has a neighbor");
            let partner = if t.head == subject { t.tail } else { t.head };
            taken.insert(partner);
            mentioned.push(partner);
            t.relation.index()
        } else {
            self.rng.gen_range(0..spec.n_relations)
        };
        while mentioned.len() < spec.candidates_per_question {
            let e = self.distractor(subject, &taken);
            taken.insert(e);
            mentioned.push(e);
        }

        let mut pool: Vec<usize> = (0..self.fillers.len()).collect();
        pool.shuffle(&mut self.rng);
        let n_pre = self.rng.gen_range(1..=3);
        let n_post = self.rng.gen_range(1..=2);
        let q_fill: Vec<&str> = pool[..n_pre + n_post]
            .iter()
            .map(|&i| self.fillers[i].as_str())
            .collect();
        let mut question: Vec<&str> = q_fill[..n_pre].to_vec();
        question.push(self.entity(subject));
        question.push(&self.kg.relation_names()[relation]);
        question.extend(&q_fill[n_pre..]);
        let question = question.join(" ");

        let rest = &pool[n_pre + n_post..];
        let positive_slot = if planted {
            0
        } else {
            self.rng.gen_range(0..mentioned.len())
        };
        let mut candidates: Vec<RawCandidate> = Vec::new();
        for (slot, &e) in mentioned.iter().enumerate() {
            let n_other = self.rng.gen_range(2..=3);
            let mut words: Vec<String> = rest
                .choose_multiple(&mut self.rng, n_other)
                .map(|&i| self.fillers[i].clone())
                .collect();
            words.push(q_fill.choose(&mut self.rng).expect("nonempty").to_string());
            words.shuffle(&mut self.rng);
            let at = self.rng.gen_range(0..=words.len());
            words.insert(at, self.entity(e).to_string());
            candidates.push(RawCandidate {
                text: words.join(" "),
                label: Some((slot == positive_slot) as i64),
            });
        }
        candidates.shuffle(&mut self.rng);
        RawRecord {
            qid: format!("q{idx:05}"),
            question,
            candidates,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut kg = KnowledgeGraph::new();
    for i in 0..spec.n_entities {
        kg.add_entity(&format!("ent{i}"));
    }
    for r in 0..spec.n_relations {
        kg.add_relation(&format!("rel{r}"));
    }
    let target = spec.n_entities * 5 / 4;
    while kg.n_triples() < target {
        let h = rng.gen_range(0..spec.n_entities);
        let t = rng.gen_range(0..spec.n_entities);
        if h == t {
            continue;
        }
        let r = rng.gen_range(0..spec.n_relations);
        kg.insert(&format!("ent{h}"), &format!("rel{r}"), &format!("ent{t}"));
    }
    // The triples file can only declare entities through triples, so every
    // entity needs one to survive a write and reload.
    for h in 0..spec.n_entities {
        if kg.neighbors(EntityId(h as u32))?.is_empty() {
            let t = (h + rng.gen_range(1..spec.n_entities)) % spec.n_entities;
            let r = rng.gen_range(0..spec.n_relations);
            kg.insert(&format!("ent{h}"), &format!("rel{r}"), &format!("ent{t}"));
        }
    }

    let n_two = spec.n_entities * 3 / 10;
    let words = pseudo_words(spec.n_entities + n_two, &mut rng);
    let mut surfaces: Vec<String> = words[..spec.n_entities].to_vec();
    let mut second = words[spec.n_entities..].iter();
    let mut two_token: Vec<usize> = (0..spec.n_entities).collect();
    two_token.shuffle(&mut rng);
    for &i in &two_token[..n_two] {
        surfaces[i] = format!("{} {}", surfaces[i], second.next().expect("enough words"));
    }
    let mut aliases = AliasDictionary::new();
    for (i, s) in surfaces.iter().enumerate() {
        aliases.insert(s, EntityId(i as u32), 1.0);
    }

    let fillers: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i}")).collect();
    let mut builder = Builder {
        spec,
        rng,
        kg,
        surfaces,
        fillers,
    };
    let records: Vec<RawRecord> = (0..spec.n_questions).map(|i| builder.question(i)).collect();

    let mut vocab: Vec<String> = builder.fillers.clone();
    vocab.extend(builder.kg.relation_names().iter().cloned());
    vocab.extend(words);
    let dim = spec.embedding_dim;
    let word_vectors = vocab
        .into_iter()
        .map(|w| {
            let v = (0..dim)
                .map(|_| builder.rng.gen_range(-0.5..=0.5))
                .collect();
            (w, v)
        })
        .collect();

    let n_train = spec.n_questions * 70 / 100;
    let n_dev = spec.n_questions * 15 / 100;
    let mut it = records.into_iter();
    let train = it.by_ref().take(n_train).collect();
    let dev = it.by_ref().take(n_dev).collect();
    let test = it.collect();
    Ok(SyntheticData {
        train,
        dev,
        test,
        kg: builder.kg,
        aliases,
        words: word_vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::link_instances;
    use crate::data::dataset::parse_dataset;
    use crate::data::tokenize::tokenize;
    use crate::linking::LinkerConfig;

    fn small(signal: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_entities: 60,
            n_questions: 40,
            signal_strength: signal,
            ..SyntheticSpec::default()
        }
    }

    fn all(data: &SyntheticData) -> Vec<RawRecord> {
        data.train
            .iter()
            .chain(&data.dev)
            .chain(&data.test)
            .cloned()
            .collect()
    }

    fn subject_links(data: &SyntheticData) -> Vec<Vec<(bool, i64)>> {
        let mut inst = parse_dataset(&to_jsonl(&all(data)), 40, true).unwrap();
        link_instances(&mut inst, &data.aliases, &LinkerConfig::default()).unwrap();
        inst.iter()
            .map(|q| {
                assert_eq!(q.question_knowledge.mention_level.len(), 1);
                let s = q.question_knowledge.mention_level[0];
                q.candidates
                    .iter()
                    .map(|c| {
                        assert_eq!(c.knowledge.mention_level.len(), 1);
                        (
                            data.kg.adjacent(s, c.knowledge.mention_level[0]),
                            c.label as i64,
                        )
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn full_signal_has_one_linked_positive() {
        let data = generate_synthetic(&small(1.0)).unwrap();
        assert_eq!(
            (data.train.len(), data.dev.len(), data.test.len()),
            (28, 6, 6)
        );
        for q in subject_links(&data) {
            assert_eq!(q.len(), 5);
            assert_eq!(q.iter().filter(|(linked, _)| *linked).count(), 1);
            assert!(q.iter().all(|(linked, label)| *linked == (*label == 1)));
        }
    }

    #[test]
    fn zero_signal_has_no_links() {
        let data = generate_synthetic(&small(0.0)).unwrap();
        for q in subject_links(&data) {
            assert!(q.iter().all(|(linked, _)| !linked));
            assert_eq!(q.iter().filter(|(_, l)| *l == 1).count(), 1);
        }
    }

    #[test]
    fn overlap_is_uniform_across_candidates() {
        let data = generate_synthetic(&small(1.0)).unwrap();
        for r in all(&data) {
            let q: BTreeSet<String> = tokenize(&r.question).into_iter().collect();
            let counts: Vec<usize> = r
                .candidates
                .iter()
                .map(|c| tokenize(&c.text).iter().filter(|t| q.contains(*t)).count())
                .collect();
            assert!(counts.iter().all(|&c| c == 1), "{counts:?}");
        }
    }

    #[test]
    fn deterministic_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        generate_synthetic(&small(0.5)).unwrap().write(&a).unwrap();
        generate_synthetic(&small(0.5)).unwrap().write(&b).unwrap();
        for f in FILES {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn written_files_reload() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
        data.write(dir.path()).unwrap();
        let kg = KnowledgeGraph::load(&dir.path().join("kg.tsv")).unwrap();
        assert_eq!(kg.n_entities(), data.kg.n_entities());
        assert_eq!(kg.to_tsv(), data.kg.to_tsv());
        let aliases = AliasDictionary::load(&dir.path().join("aliases.tsv"), &kg).unwrap();
        assert_eq!(aliases.len(), data.aliases.len());
    }

    #[test]
    fn spec_errors() {
        let bad = SyntheticSpec {
            candidates_per_question: 1,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Spec(_))));
        let bad = SyntheticSpec {
            n_entities: 10,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Spec(_))));
        let bad = SyntheticSpec {
            signal_strength: 1.5,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Spec(_))));
    }
}
