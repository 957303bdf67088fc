//! Lexical overlap features between a question and a candidate.

use std::collections::{BTreeSet, HashSet};

use crate::data::IdfTable;

/// `[|Q∩A| / (|Q|+|A|), idf-weighted ratio, both again without stopwords]`,
/// computed over the sets of distinct tokens of each sentence.
pub fn overlap_features(
    q: &[String],
    a: &[String],
    idf: &IdfTable,
    stopwords: &HashSet<String>,
) -> [f64; 4] {
    let qs: BTreeSet<&str> = q.iter().map(String::as_str).collect();
    let as_: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let [r, w] = ratios(&qs, &as_, idf);
    let [rs, ws] = ratios(&content(&qs, stopwords), &content(&as_, stopwords), idf);
    [r, w, rs, ws]
}

fn content<'a>(s: &BTreeSet<&'a str>, stopwords: &HashSet<String>) -> BTreeSet<&'a str> {
    s.iter()
        .copied()
        .filter(|t| !stopwords.contains(*t))
        .collect()
}

fn ratios(q: &BTreeSet<&str>, a: &BTreeSet<&str>, idf: &IdfTable) -> [f64; 2] {
    if q.is_empty() && a.is_empty() {
        return [0.0, 0.0];
    }
    let common: Vec<&str> = q.intersection(a).copied().collect();
    let raw = common.len() as f64 / (q.len() + a.len()) as f64;
    let weight = |s: &mut dyn Iterator<Item = &str>| s.map(|t| idf.idf(t)).sum::<f64>();
    let num = weight(&mut common.iter().copied());
    let den = weight(&mut q.iter().copied()) + weight(&mut a.iter().copied());
    [raw, num / den]
}
