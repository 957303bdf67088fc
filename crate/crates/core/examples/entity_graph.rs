//! The three window variants of one sentence's entity graph and the
//! normalized operator the GCN propagates with.

use kaqa::entity_graph::{build_variants, normalized_operator, DEFAULT_MAX_NEIGHBORS};
use kaqa::kg::KnowledgeGraph;

fn main() -> kaqa::Result<()> {
    let kg = KnowledgeGraph::from_named([
        ("paris", "capital_of", "france"),
        ("france", "member_of", "eu"),
        ("berlin", "capital_of", "germany"),
        ("germany", "member_of", "eu"),
        ("seine", "flows_through", "paris"),
    ]);
    let mentions: Vec<_> = ["paris", "germany", "berlin"]
        .iter()
        .map(|name| kg.entity(name).expect("entity is in the KG"))
        .collect();
    for graph in build_variants(&mentions, &kg, DEFAULT_MAX_NEIGHBORS)? {
        let names: Vec<&str> = graph
            .node_entities()
            .into_iter()
            .map(|e| kg.entity_name(e))
            .collect();
        println!("window {}: nodes {names:?}", graph.window);
        for ((i, j), kind) in &graph.edges {
            println!("  {} - {} ({kind:?})", names[*i], names[*j]);
        }
        let op = normalized_operator(&graph);
        for i in 0..op.rows() {
            let row: Vec<String> = (0..op.cols())
                .map(|j| format!("{:.3}", op.get(i, j)))
                .collect();
            println!("  [{}]", row.join(" "));
        }
    }
    Ok(())
}
