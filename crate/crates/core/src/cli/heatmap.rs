//! Self-contained HTML heatmaps of recorded attention weights.
//!
//! Each row is one attention view over one sentence. Cell intensity is the
//! weight divided by the row maximum, so a single-token row is one
//! full-intensity cell. Rows are checked to be distributions before any
//! markup is produced.

use std::fmt::Write as _;

use crate::data::QAInstance;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::model::{ModelOutput, PreparedInstance, SentenceInput};

/// Tolerance on `|Σw − 1|`.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRow {
    pub view: String,
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSection {
    pub title: String,
    pub rows: Vec<HeatmapRow>,
}

/// Fails unless `row` is nonnegative (to 1e-12) and sums to one.
pub fn check_distribution(row: &HeatmapRow) -> Result<()> {
    let sum: f64 = row.weights.iter().sum();
    let min = row.weights.iter().copied().fold(f64::INFINITY, f64::min);
    if row.weights.is_empty() || (sum - 1.0).abs() > SUM_TOLERANCE || min < -1e-12 {
        return Err(Error::NotNormalized(format!(
            "view {} sums to {sum} with minimum {min}",
            row.view
        )));
    }
    if row.labels.len() != row.weights.len() {
        return Err(Error::NotNormalized(format!(
            "view {} has {} labels for {} weights",
            row.view,
            row.labels.len(),
            row.weights.len()
        )));
    }
    Ok(())
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;color:#222}\
table{border-collapse:collapse;margin-bottom:1.5em}\
th{text-align:left;padding:2px 10px 2px 0;font-weight:normal;color:#555;white-space:nowrap}\
td{padding:3px 6px;border:1px solid #eee}";

/// Renders `sections` as one HTML page with inline styles only.
pub fn render(title: &str, sections: &[HeatmapSection]) -> Result<String> {
    for row in sections.iter().flat_map(|s| &s.rows) {
        check_distribution(row)?;
    }
    let mut html = String::new();
    let w = &mut html;
    let title = escape(title);
    let _ = write!(
        w,
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n<h1>{title}</h1>\n"
    );
    for section in sections {
        let _ = writeln!(w, "<h2>{}</h2>\n<table>", escape(&section.title));
        for row in &section.rows {
            let max = row.weights.iter().copied().fold(0.0, f64::max);
            let _ = write!(w, "<tr><th>{}</th>", escape(&row.view));
            for (label, &weight) in row.labels.iter().zip(&row.weights) {
                let alpha = if max > 0.0 { weight / max } else { 0.0 };
                let _ = write!(
                    w,
                    "<td style=\"background:rgba(200,40,40,{alpha:.4})\" title=\"{weight:.6}\">{}</td>",
                    escape(label)
                );
            }
            let _ = writeln!(w, "</tr>");
        }
        let _ = writeln!(w, "</table>");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html)
}

fn entity_label(kg: &KnowledgeGraph, row: Option<usize>) -> String {
    match row {
        Some(i) if i < kg.n_entities() => kg.entity_name(EntityId(i as u32)).to_string(),
        _ => "(none)".to_string(),
    }
}

/// Side (`q` or `a`) a trace key refers to.
fn side(key: &str) -> Option<char> {
    key.split('.').find_map(|part| match part {
        "q" => Some('q'),
        "a" => Some('a'),
        _ => None,
    })
}

/// Cell labels for the trace entry `key` of `len` weights.
fn labels_for(
    key: &str,
    len: usize,
    tokens: &[String],
    input: &SentenceInput,
    kg: &KnowledgeGraph,
) -> Vec<String> {
    if let Some(t) = key.split_once("candidates@").map(|(_, t)| t) {
        let slots = t
            .parse::<usize>()
            .ok()
            .and_then(|t| input.candidates.get(t).cloned().flatten());
        if let Some(slots) = slots.filter(|s| s.len() == len) {
            return slots.into_iter().map(|e| entity_label(kg, e)).collect();
        }
    } else if key.contains("knowledge") {
        if let Some(graph) = &input.graph {
            if graph.n_original == len {
                return graph.nodes[..len]
                    .iter()
                    .map(|&e| entity_label(kg, e))
                    .collect();
            }
        }
    }
    if tokens.len() == len {
        return tokens.to_vec();
    }
    (0..len).map(|i| format!("#{i}")).collect()
}

fn view_name(key: &str) -> String {
    match key.split_once("candidates@") {
        Some((_, t)) => {
            let t: usize = t.parse().unwrap_or(0);
            format!("entity candidates at token {t}")
        }
        None => key.to_string(),
    }
}

/// One section per candidate holding every attention view recorded while
/// scoring it. `linked` supplies tokens and `prepared` the entity rows.
pub fn attention_sections(
    linked: &QAInstance,
    prepared: &PreparedInstance,
    outputs: &[ModelOutput],
    kg: &KnowledgeGraph,
) -> Vec<HeatmapSection> {
    outputs
        .iter()
        .enumerate()
        .map(|(i, out)| {
            let candidate = &linked.candidates[i];
            let rows = out
                .trace
                .iter()
                .filter_map(|(key, weights)| {
                    let (tokens, input) = match side(key)? {
                        'q' => (&linked.question[..], &prepared.question),
                        _ => (&candidate.tokens[..], &prepared.candidates[i].input),
                    };
                    Some(HeatmapRow {
                        view: view_name(key),
                        labels: labels_for(key, weights.len(), tokens, input, kg),
                        weights: weights.clone(),
                    })
                })
                .collect();
            HeatmapSection {
                title: format!(
                    "Candidate {i} (label {}, score {:.4}): {}",
                    candidate.label,
                    out.prob,
                    candidate.tokens.join(" ")
                ),
                rows,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(weights: Vec<f64>) -> HeatmapRow {
        HeatmapRow {
            view: "v".into(),
            labels: (0..weights.len()).map(|i| format!("w{i}")).collect(),
            weights,
        }
    }

    #[test]
    fn rejects_non_distributions() {
        assert!(check_distribution(&row(vec![0.25, 0.75])).is_ok());
        for bad in [vec![0.5, 0.4], vec![1.5, -0.5], vec![]] {
            assert!(matches!(
                check_distribution(&row(bad)),
                Err(Error::NotNormalized(_))
            ));
        }
    }

    #[test]
    fn singleton_row_is_full_intensity() {
        let html = render(
            "t",
            &[HeatmapSection {
                title: "s".into(),
                rows: vec![row(vec![1.0])],
            }],
        )
        .unwrap();
        assert_eq!(html.matches("<td").count(), 1);
        assert!(html.contains("rgba(200,40,40,1.0000)"));
    }

    #[test]
    fn page_is_self_contained_and_escaped() {
        let mut r = row(vec![0.5, 0.5]);
        r.labels[0] = "<b>&".into();
        let html = render(
            "q<1>",
            &[HeatmapSection {
                title: "s".into(),
                rows: vec![r],
            }],
        )
        .unwrap();
        assert!(html.contains("&lt;b&gt;&amp;"));
        assert!(html.contains("q&lt;1&gt;"));
        for external in ["http://", "https://", "<link", "<script", "src="] {
            assert!(!html.contains(external), "{external}");
        }
    }
}
