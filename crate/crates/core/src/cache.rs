//! Content-addressed cache of linked knowledge and entity graphs per split.
//!
//! The key hashes everything the result depends on: split text, KG triples,
//! alias table, linker settings and the neighbor cap. An entry is two files,
//! `<key>.knowledge.json` and `<key>.graphs.tsv`.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{link_instances, to_jsonl, QAInstance, RawRecord};
use crate::entity_graph::{read_cache, write_cache, EntityGraph, Window};
use crate::error::{Error, Result};
use crate::kg::{AliasDictionary, KnowledgeGraph};
use crate::linking::{KnowledgeSequence, LinkerConfig};
use crate::model::{split_graphs, SplitGraphs};

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "KAQA_CACHE_DIR";

/// Lowercase hex SHA-256 over length-prefixed parts.
pub fn content_hash<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Cache directory from the environment, if set and nonempty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn split_key(
    split: &[QAInstance],
    kg: &KnowledgeGraph,
    aliases: &AliasDictionary,
    linker: &LinkerConfig,
    max_neighbors: usize,
) -> String {
    let raw: Vec<RawRecord> = split.iter().map(QAInstance::to_raw).collect();
    let text = to_jsonl(&raw);
    let linker = serde_json::to_string(linker).expect("linker config serializes");
    content_hash([
        text.as_bytes(),
        kg.to_tsv().as_bytes(),
        aliases.to_tsv(kg).as_bytes(),
        linker.as_bytes(),
        &max_neighbors.to_le_bytes()[..],
    ])
}

fn graph_id(instance: usize, sentence: usize) -> String {
    format!("{instance}/{sentence}")
}

fn store(dir: &Path, key: &str, split: &[QAInstance], graphs: &SplitGraphs) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let knowledge: Vec<Vec<&KnowledgeSequence>> = split
        .iter()
        .map(|q| {
            std::iter::once(&q.question_knowledge)
                .chain(q.candidates.iter().map(|c| &c.knowledge))
                .collect()
        })
        .collect();
    let path = dir.join(format!("{key}.knowledge.json"));
    let json = serde_json::to_string(&knowledge).expect("knowledge serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let mut records = Vec::new();
    for (i, sentences) in graphs.iter().enumerate() {
        for (j, g) in sentences.iter().enumerate() {
            for variant in g.iter().flatten() {
                records.push((graph_id(i, j), variant.clone()));
            }
        }
    }
    write_cache(&dir.join(format!("{key}.graphs.tsv")), &records)
}

fn load(dir: &Path, key: &str, split: &mut [QAInstance]) -> Result<Option<SplitGraphs>> {
    let kpath = dir.join(format!("{key}.knowledge.json"));
    let gpath = dir.join(format!("{key}.graphs.tsv"));
    if !kpath.exists() || !gpath.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&kpath).map_err(|e| Error::io(&kpath, e))?;
    let knowledge: Vec<Vec<KnowledgeSequence>> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", kpath.display())))?;
    if knowledge.len() != split.len()
        || knowledge
            .iter()
            .zip(split.iter())
            .any(|(k, q)| k.len() != q.candidates.len() + 1)
    {
        return Err(Error::Format(format!(
            "{} does not match its split",
            kpath.display()
        )));
    }
    let mut graphs: SplitGraphs = split
        .iter()
        .map(|q| vec![None; q.candidates.len() + 1])
        .collect();
    let mut partial: std::collections::HashMap<String, Vec<EntityGraph>> =
        std::collections::HashMap::new();
    for (id, g) in read_cache(&gpath)? {
        partial.entry(id).or_default().push(g);
    }
    for (id, mut variants) in partial {
        let bad = || Error::Format(format!("{}: bad graph id `{id}`", gpath.display()));
        let (i, j) = id.split_once('/').ok_or_else(bad)?;
        let (i, j): (usize, usize) = (i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?);
        variants.sort_by_key(|g| Window::ALL_VARIANTS.iter().position(|w| *w == g.window));
        let slot = graphs
            .get_mut(i)
            .and_then(|s| s.get_mut(j))
            .ok_or_else(bad)?;
        *slot = Some(<[EntityGraph; 3]>::try_from(variants).map_err(|_| bad())?);
    }
    for (q, ks) in split.iter_mut().zip(knowledge) {
        let mut ks = ks.into_iter();
        q.question_knowledge = ks.next().expect("length checked");
        for (c, k) in q.candidates.iter_mut().zip(ks) {
            c.knowledge = k;
        }
    }
    Ok(Some(graphs))
}

/// Links `split` and builds its entity graphs, reusing a cached entry under
/// `cache` when one exists and writing one otherwise.
pub fn link_and_build(
    split: &mut [QAInstance],
    kg: &KnowledgeGraph,
    aliases: &AliasDictionary,
    linker: &LinkerConfig,
    max_neighbors: usize,
    cache: Option<&Path>,
) -> Result<SplitGraphs> {
    let key = cache.map(|_| split_key(split, kg, aliases, linker, max_neighbors));
    if let (Some(dir), Some(key)) = (cache, &key) {
        if let Some(graphs) = load(dir, key, split)? {
            return Ok(graphs);
        }
    }
    link_instances(split, aliases, linker)?;
    let graphs = split_graphs(split, kg, max_neighbors)?;
    if let (Some(dir), Some(key)) = (cache, &key) {
        store(dir, key, split, &graphs)?;
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, parse_dataset, SyntheticSpec, DEFAULT_MAX_LEN};
    use crate::entity_graph::DEFAULT_MAX_NEIGHBORS;

    #[test]
    fn hash_separates_parts() {
        assert_ne!(
            content_hash([&b"ab"[..], b"c"]),
            content_hash([&b"a"[..], b"bc"])
        );
        assert_eq!(content_hash([&b"x"[..]]).len(), 64);
    }

    #[test]
    fn cached_entry_matches_fresh_build() {
        let data = generate_synthetic(&SyntheticSpec {
            n_questions: 30,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let split = parse_dataset(&to_jsonl(&data.train), DEFAULT_MAX_LEN, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let linker = LinkerConfig::default();

        let mut fresh = split.clone();
        let g0 = link_and_build(
            &mut fresh,
            &data.kg,
            &data.aliases,
            &linker,
            DEFAULT_MAX_NEIGHBORS,
            None,
        )
        .unwrap();
        let mut first = split.clone();
        let g1 = link_and_build(
            &mut first,
            &data.kg,
            &data.aliases,
            &linker,
            DEFAULT_MAX_NEIGHBORS,
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
        let mut second = split.clone();
        let g2 = link_and_build(
            &mut second,
            &data.kg,
            &data.aliases,
            &linker,
            DEFAULT_MAX_NEIGHBORS,
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(g0, g1);
        assert_eq!(g1, g2);
        assert_eq!(fresh, second);

        let sparse = data.kg.subsample(0.5, 1).unwrap();
        let mut other = split.clone();
        link_and_build(
            &mut other,
            &sparse,
            &data.aliases,
            &linker,
            DEFAULT_MAX_NEIGHBORS,
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);
    }
}
