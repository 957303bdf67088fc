//! Greedy longest-match linking of a tokenized sentence against an alias
//! dictionary, with K candidate slots per mention.

use kaqa::kg::{AliasDictionary, KnowledgeGraph};
use kaqa::linking::{link, LinkerConfig};

fn main() -> kaqa::Result<()> {
    let kg = KnowledgeGraph::from_named([
        ("barack_obama", "born_in", "honolulu"),
        ("barack_obama", "spouse", "michelle_obama"),
        ("honolulu", "located_in", "hawaii"),
        ("obama_japan", "located_in", "japan"),
    ]);
    let aliases = AliasDictionary::parse(
        "barack obama\tbarack_obama\t0.95\n\
         obama\tbarack_obama\t0.7\n\
         obama\tobama_japan\t0.2\n\
         obama\tmichelle_obama\t0.1\n\
         honolulu\thonolulu\t0.9\n\
         hawaii\thawaii\t0.9\n",
        &kg,
    )?;
    let tokens: Vec<String> = "where was Barack Obama born , Honolulu or Obama"
        .split_whitespace()
        .map(String::from)
        .collect();
    let config = LinkerConfig {
        k: 3,
        ..LinkerConfig::default()
    };
    let seq = link(&tokens, &aliases, &config)?;
    for set in &seq.sets {
        let m = &set.mention;
        let slots: Vec<String> = set
            .candidates
            .iter()
            .map(|c| match c {
                Some((e, prior)) => format!("{}:{prior:.2}", kg.entity_name(*e)),
                None => "NULL".into(),
            })
            .collect();
        println!(
            "tokens {}..{} {:?} (confidence {:.2}) -> {}",
            m.start,
            m.end(),
            m.surface,
            m.confidence,
            slots.join(" ")
        );
    }
    let aligned: Vec<String> = (0..tokens.len())
        .map(|t| match seq.at(t) {
            Some(set) => set
                .top()
                .map_or("NULL".into(), |e| kg.entity_name(e).to_string()),
            None => "-".into(),
        })
        .collect();
    println!("token-aligned top candidates: {}", aligned.join(" "));
    Ok(())
}
