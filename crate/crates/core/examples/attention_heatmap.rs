//! Runs an untrained CKANN on a tiny question and renders every attention
//! vector it records as a self-contained HTML heatmap.
//!
//! Usage: `attention_heatmap [output.html]`

use kaqa::cli::heatmap::{render, HeatmapRow, HeatmapSection};
use kaqa::model::fixture::{tiny_config, tiny_instance, tiny_model};
use kaqa::model::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "attention.html".into());
    let model = tiny_model(tiny_config(Variant::Ckann));
    let inst = tiny_instance();
    let sections: Vec<HeatmapSection> = model
        .predict(&inst)?
        .into_iter()
        .enumerate()
        .map(|(i, out)| HeatmapSection {
            title: format!("candidate {i}: p = {:.3}", out.prob),
            rows: out
                .trace
                .into_iter()
                .map(|(view, weights)| HeatmapRow {
                    labels: (0..weights.len()).map(|t| format!("#{t}")).collect(),
                    view,
                    weights,
                })
                .collect(),
        })
        .collect();
    std::fs::write(&path, render(&inst.qid, &sections)?)?;
    let rows: usize = sections.iter().map(|s| s.rows.len()).sum();
    println!("wrote {rows} attention rows to {path}");
    Ok(())
}
