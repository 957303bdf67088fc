//! Dictionary-based entity linking.
//!
//! Mentions are found by a greedy left-to-right longest-match scan over
//! lowercased n-grams. Each mention carries the top-K alias candidates,
//! padded with `None` to exactly K slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{AliasDictionary, EntityId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerConfig {
    pub max_ngram: usize,
    pub threshold: f64,
    pub k: usize,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            max_ngram: 4,
            threshold: 0.2,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub length: usize,
    /// Lowercased tokens joined by single spaces.
    pub surface: String,
    pub confidence: f64,
}

impl Mention {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub mention: Mention,
    /// Exactly K slots in non-increasing prior order; `None` slots trail.
    pub candidates: Vec<Option<(EntityId, f64)>>,
}

impl CandidateSet {
    pub fn top(&self) -> Option<EntityId> {
        self.candidates.first().copied().flatten().map(|(e, _)| e)
    }

    pub fn entities(&self) -> impl Iterator<Item = Option<EntityId>> + '_ {
        self.candidates.iter().map(|c| c.map(|(e, _)| e))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeSequence {
    pub sets: Vec<CandidateSet>,
    /// One entry per token; `Some(i)` points into `sets`.
    pub token_aligned: Vec<Option<usize>>,
    /// Top-prior entity of each mention, consecutive repeats removed.
    pub mention_level: Vec<EntityId>,
}

impl KnowledgeSequence {
    pub fn len(&self) -> usize {
        self.token_aligned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_aligned.is_empty()
    }

    pub fn at(&self, position: usize) -> Option<&CandidateSet> {
        self.token_aligned[position].map(|i| &self.sets[i])
    }

    /// Restricts to the first `len` tokens, dropping mentions that would be cut.
    pub fn truncated(&self, len: usize) -> KnowledgeSequence {
        if len >= self.len() {
            return self.clone();
        }
        let sets: Vec<CandidateSet> = self
            .sets
            .iter()
            .filter(|s| s.mention.end() <= len)
            .cloned()
            .collect();
        build_knowledge_sequence(len, sets)
    }
}

pub fn detect_mentions(
    tokens: &[String],
    aliases: &AliasDictionary,
    max_ngram: usize,
    threshold: f64,
) -> Vec<Mention> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let longest = max_ngram.min(lower.len() - i);
        let hit = (1..=longest).rev().find_map(|n| {
            let surface = lower[i..i + n].join(" ");
            let top = aliases.lookup(&surface)?.first()?.prior;
            (top >= threshold).then_some((n, surface, top))
        });
        match hit {
            Some((n, surface, confidence)) => {
                mentions.push(Mention {
                    start: i,
                    length: n,
                    surface,
                    confidence,
                });
                i += n;
            }
            None => i += 1,
        }
    }
    mentions
}

pub fn attach_candidates(
    mentions: &[Mention],
    aliases: &AliasDictionary,
    k: usize,
) -> Result<Vec<CandidateSet>> {
    mentions
        .iter()
        .map(|m| {
            let found = aliases
                .lookup(&m.surface)
                .ok_or_else(|| Error::UnknownSurface(m.surface.clone()))?;
            let mut candidates: Vec<_> = found
                .iter()
                .take(k)
                .map(|c| Some((c.entity, c.prior)))
                .collect();
            candidates.resize(k, None);
            Ok(CandidateSet {
                mention: m.clone(),
                candidates,
            })
        })
        .collect()
}

/// Lays candidate sets over a sentence of `n_tokens` tokens.
pub fn build_knowledge_sequence(n_tokens: usize, sets: Vec<CandidateSet>) -> KnowledgeSequence {
    let mut token_aligned = vec![None; n_tokens];
    let mut mention_level: Vec<EntityId> = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        for slot in &mut token_aligned[set.mention.start..set.mention.end().min(n_tokens)] {
            *slot = Some(i);
        }
        if let Some(e) = set.top() {
            if mention_level.last() != Some(&e) {
                mention_level.push(e);
            }
        }
    }
    KnowledgeSequence {
        sets,
        token_aligned,
        mention_level,
    }
}

/// Mention detection, candidate attachment and alignment in one call.
pub fn link(
    tokens: &[String],
    aliases: &AliasDictionary,
    config: &LinkerConfig,
) -> Result<KnowledgeSequence> {
    let mentions = detect_mentions(tokens, aliases, config.max_ngram, config.threshold);
    let sets = attach_candidates(&mentions, aliases, config.k)?;
    Ok(build_knowledge_sequence(tokens.len(), sets))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::kg::KnowledgeGraph;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn fixture() -> (KnowledgeGraph, AliasDictionary) {
        let kg = KnowledgeGraph::parse(
            "nyc\tin\tusa\nny_state\tin\tusa\nnobel_prize\tnamed_after\talfred_nobel\nrare\tr\tusa\n",
        )
        .unwrap();
        let aliases = AliasDictionary::parse(
            "new york\tny_state\t0.7\nnew york city\tnyc\t0.9\nnobel prize\tnobel_prize\t0.8\n\
             alfred nobel\talfred_nobel\t1.0\nthing\trare\t0.1\nusa\tusa\t1.0\n",
            &kg,
        )
        .unwrap();
        (kg, aliases)
    }

    #[test]
    fn longest_match_wins() {
        let (_, aliases) = fixture();
        let m = detect_mentions(&toks("new york city"), &aliases, 3, 0.2);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].length), (0, 3));
        assert_eq!(m[0].confidence, 0.9);

        let m = detect_mentions(&toks("new york city"), &aliases, 2, 0.2);
        assert_eq!((m[0].start, m[0].length), (0, 2));
    }

    #[test]
    fn threshold_rule() {
        let (_, aliases) = fixture();
        assert!(detect_mentions(&toks("a thing"), &aliases, 4, 0.2).is_empty());
        assert_eq!(detect_mentions(&toks("a thing"), &aliases, 4, 0.1).len(), 1);
    }

    #[test]
    fn disjoint_mentions() {
        let (_, aliases) = fixture();
        let m = detect_mentions(
            &toks("the nobel prize was founded by alfred nobel"),
            &aliases,
            4,
            0.2,
        );
        let spans: Vec<_> = m.iter().map(|m| (m.start, m.length)).collect();
        assert_eq!(spans, vec![(1, 2), (6, 2)]);
    }

    #[test]
    fn candidate_padding_and_top_k() {
        let kg = KnowledgeGraph::from_named(
            (0..7).map(|i| ("hub", "r", ["e0", "e1", "e2", "e3", "e4", "e5", "e6"][i])),
        );
        let mut aliases = AliasDictionary::new();
        for i in 0..7 {
            aliases.insert(
                "many",
                kg.entity(&format!("e{i}")).unwrap(),
                0.1 * (i + 1) as f64,
            );
        }
        aliases.insert("two", kg.entity("e0").unwrap(), 0.9);
        aliases.insert("two", kg.entity("e1").unwrap(), 0.3);

        let m = detect_mentions(&toks("many two"), &aliases, 1, 0.2);
        let sets = attach_candidates(&m, &aliases, 5).unwrap();
        let names: Vec<_> = sets[0]
            .entities()
            .map(|e| kg.entity_name(e.unwrap()).to_string())
            .collect();
        assert_eq!(names, ["e6", "e5", "e4", "e3", "e2"]);
        assert_eq!(sets[1].candidates.len(), 5);
        assert_eq!(sets[1].entities().filter(Option::is_some).count(), 2);
        assert!(sets[1].candidates[2..].iter().all(Option::is_none));

        let single = attach_candidates(&m, &aliases, 1).unwrap();
        assert_eq!(
            single[1].candidates,
            vec![Some((kg.entity("e0").unwrap(), 0.9))]
        );

        let ghost = Mention {
            start: 0,
            length: 1,
            surface: "ghost".into(),
            confidence: 1.0,
        };
        assert!(matches!(
            attach_candidates(&[ghost], &aliases, 5),
            Err(Error::UnknownSurface(_))
        ));
    }

    #[test]
    fn sequence_alignment() {
        let (kg, aliases) = fixture();
        let config = LinkerConfig::default();
        let empty = link(&toks("nothing to see"), &aliases, &config).unwrap();
        assert!(empty.token_aligned.iter().all(Option::is_none));
        assert!(empty.mention_level.is_empty());

        let seq = link(&toks("we saw the big alfred nobel"), &aliases, &config).unwrap();
        let expected: Vec<_> = (0..6).map(|i| (i >= 4).then_some(0)).collect();
        assert_eq!(seq.token_aligned, expected);
        assert_eq!(seq.mention_level, vec![kg.entity("alfred_nobel").unwrap()]);

        let seq = link(&toks("usa usa"), &aliases, &config).unwrap();
        assert_eq!(seq.sets.len(), 2);
        assert_eq!(seq.mention_level.len(), 1);

        let seq = link(&toks("usa alfred nobel usa"), &aliases, &config).unwrap();
        assert_eq!(seq.mention_level.len(), 3);
        let cut = seq.truncated(2);
        assert_eq!(cut.len(), 2);
        assert_eq!(cut.sets.len(), 1);
        assert_eq!(cut.token_aligned, vec![Some(0), None]);
    }

    proptest! {
        #[test]
        fn spans_disjoint_sorted_and_case_invariant(
            words in prop::collection::vec(
                prop::sample::select(vec!["New", "york", "CITY", "nobel", "Prize", "alfred", "usa", "the", "x"]),
                0..20,
            )
        ) {
            let (_, aliases) = fixture();
            let tokens: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            let upper: Vec<String> = words.iter().map(|w| w.to_uppercase()).collect();
            let m = detect_mentions(&tokens, &aliases, 4, 0.2);
            for pair in m.windows(2) {
                prop_assert!(pair[0].end() <= pair[1].start);
            }
            for mention in &m {
                prop_assert!(mention.end() <= tokens.len());
                prop_assert!(mention.confidence >= 0.2);
            }
            prop_assert_eq!(m, detect_mentions(&upper, &aliases, 4, 0.2));

            let sets = attach_candidates(&detect_mentions(&tokens, &aliases, 4, 0.2), &aliases, 3).unwrap();
            for s in &sets {
                prop_assert_eq!(s.candidates.len(), 3);
                let priors: Vec<f64> = s.candidates.iter().flatten().map(|c| c.1).collect();
                prop_assert!(priors.windows(2).all(|w| w[0] >= w[1]));
                let first_none = s.candidates.iter().position(Option::is_none).unwrap_or(3);
                prop_assert!(s.candidates[first_none..].iter().all(Option::is_none));
            }
        }
    }
}
