//! Test MAP as the knowledge graph is thinned: the same CKANN setup at
//! several triple keep ratios, averaged over seeds.
//!
//! Usage: `kg_completeness [n_seeds]`

use kaqa::data::{generate_synthetic, SyntheticSpec};
use kaqa::model::Variant;
use kaqa::pipeline::{run_experiment, ExperimentConfig};

const RATIOS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

fn main() -> kaqa::Result<()> {
    let n_seeds: u64 = std::env::args()
        .nth(1)
        .map_or(Ok(3), |s| s.parse())
        .expect("seed count is an integer");
    let datasets = (0..n_seeds)
        .map(|seed| {
            generate_synthetic(&SyntheticSpec {
                seed,
                ..SyntheticSpec::default()
            })
        })
        .collect::<kaqa::Result<Vec<_>>>()?;
    println!("ratio\ttriples\tmean_test_map");
    for ratio in RATIOS {
        let (mut total, mut triples) = (0.0, 0);
        for (seed, data) in datasets.iter().enumerate() {
            let mut config = ExperimentConfig::desk_scale(Variant::Ckann, seed as u64);
            config.kg_keep_ratio = ratio;
            let result = run_experiment(data, &config)?;
            total += result.test.map;
            triples = result.n_triples;
        }
        println!("{ratio}\t{triples}\t{:.4}", total / n_seeds as f64);
    }
    Ok(())
}
