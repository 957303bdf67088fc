//! TransE on a chain graph: relation `r_k` links `e_i` to `e_{i+k}`, so the
//! learned vectors should place each entity's true tails near the front.
//!
//! Usage: `train_transe [epochs]`

use kaqa::kg::KnowledgeGraph;
use kaqa::transe::{filtered_tail_ranks, train_transe, TransEConfig};

fn main() -> kaqa::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map_or(Ok(200), |s| s.parse())
        .expect("epoch count is an integer");
    let mut kg = KnowledgeGraph::new();
    for i in 0..50 {
        kg.add_entity(&format!("e{i}"));
    }
    for k in 1..=5 {
        for i in 0..50 - k {
            kg.insert(&format!("e{i}"), &format!("r{k}"), &format!("e{}", i + k));
        }
    }
    let config = TransEConfig {
        dim: 20,
        epochs,
        learning_rate: 0.05,
        ..TransEConfig::default()
    };
    let (table, trace) = train_transe(&kg, &config)?;
    println!("epoch\tloss");
    for (epoch, loss) in trace.epoch_loss.iter().enumerate() {
        if epoch % 20 == 0 || epoch + 1 == trace.epoch_loss.len() {
            println!("{epoch}\t{loss:.4}");
        }
    }
    let ranks = filtered_tail_ranks(&table, &kg, config.norm)?;
    let mean = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
    let hits = ranks.iter().filter(|&&r| r <= 10).count() as f64 / ranks.len() as f64;
    println!(
        "{} triples: filtered mean rank {mean:.2}, hits@10 {hits:.3}",
        kg.n_triples()
    );
    Ok(())
}
