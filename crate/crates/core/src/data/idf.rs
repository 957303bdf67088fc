//! Inverse document frequencies and the shipped stopword list.

use std::collections::{HashMap, HashSet};

use super::dataset::QAInstance;

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

pub fn stopwords() -> HashSet<String> {
    STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// `idf(w) = ln((1 + N) / (1 + df(w))) + 1`, where every question and every
/// candidate sentence counts as one document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdfTable {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_documents<'a, D>(docs: impl IntoIterator<Item = D>) -> Self
    where
        D: IntoIterator<Item = &'a String>,
    {
        let mut table = IdfTable::default();
        for doc in docs {
            table.n_docs += 1;
            let unique: HashSet<&String> = doc.into_iter().collect();
            for w in unique {
                *table.df.entry(w.clone()).or_default() += 1;
            }
        }
        table
    }

    pub fn from_instances(split: &[QAInstance]) -> Self {
        Self::from_documents(split.iter().flat_map(|q| {
            std::iter::once(&q.question).chain(q.candidates.iter().map(|c| &c.tokens))
        }))
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn idf(&self, token: &str) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df(token) as f64)).ln() + 1.0
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn docs(d: &[&[&str]]) -> Vec<Vec<String>> {
        d.iter()
            .map(|s| s.iter().map(|w| w.to_string()).collect())
            .collect()
    }

    #[test]
    fn examples() {
        let d = docs(&[&["a", "b"], &["a", "a"], &["a", "c"]]);
        let t = IdfTable::from_documents(&d);
        assert_eq!(t.n_docs(), 3);
        assert!((t.idf("a") - 1.0).abs() < 1e-15);
        assert!((t.idf("zzz") - (4.0f64.ln() + 1.0)).abs() < 1e-15);
        assert!(t.idf("b") > t.idf("a"));
    }

    #[test]
    fn stopword_file_loads() {
        let s = stopwords();
        assert!(s.contains("the"));
        assert!(!s.contains("nobel"));
    }

    proptest! {
        #[test]
        fn idf_decreases_with_df(
            d in prop::collection::vec(prop::collection::vec(0u8..6, 1..5), 1..12)
        ) {
            let d: Vec<Vec<String>> = d.iter().map(|s| s.iter().map(|w| w.to_string()).collect()).collect();
            let t = IdfTable::from_documents(&d);
            for a in 0..6u8 {
                for b in 0..6u8 {
                    let (a, b) = (a.to_string(), b.to_string());
                    if t.df(&a) < t.df(&b) {
                        prop_assert!(t.idf(&a) > t.idf(&b));
                    }
                }
            }
        }
    }
}
