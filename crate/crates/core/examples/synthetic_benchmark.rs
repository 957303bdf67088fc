//! Knowledge benefit on the synthetic benchmark: CKANN against the same
//! model with its knowledge module ablated, averaged over seeds.
//!
//! Usage: `synthetic_benchmark [signal_strength] [n_seeds] [variant]`

use std::time::Instant;

use kaqa::data::{generate_synthetic, SyntheticSpec};
use kaqa::model::Variant;
use kaqa::pipeline::{run_experiment, ExperimentConfig};

fn main() -> kaqa::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let signal: f64 = args
        .get(1)
        .map_or(Ok(1.0), |s| s.parse())
        .expect("signal is a number");
    let n_seeds: u64 = args
        .get(2)
        .map_or(Ok(3), |s| s.parse())
        .expect("seed count is an integer");
    let variant: Variant = args.get(3).map_or("CKANN", String::as_str).parse()?;

    let start = Instant::now();
    let (mut full, mut ablated) = (0.0, 0.0);
    for seed in 0..n_seeds {
        let data = generate_synthetic(&SyntheticSpec {
            signal_strength: signal,
            seed,
            ..SyntheticSpec::default()
        })?;
        let mut config = ExperimentConfig::desk_scale(variant, seed);
        let with = run_experiment(&data, &config)?;
        config.model.ablate_knowledge = true;
        let without = run_experiment(&data, &config)?;
        println!(
            "seed {seed}: best dev MAP {:.4} (epoch {}), test MAP {:.4}, ablated test MAP {:.4}",
            with.outcome.best_dev.map_or(f64::NAN, |d| d.map),
            with.outcome.best_epoch,
            with.test.map,
            without.test.map
        );
        full += with.test.map;
        ablated += without.test.map;
    }
    let n = n_seeds as f64;
    println!(
        "{variant} signal {signal}: mean test MAP {:.4}, ablated {:.4}, gap {:+.4} ({:.0}s)",
        full / n,
        ablated / n,
        (full - ablated) / n,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
