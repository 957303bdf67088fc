//! Ranking metrics and the evaluation driver.
//!
//! Candidates are ranked by descending score with ties broken by ascending
//! original index. MAP and MRR skip questions without a positive label and
//! report how many were skipped; P@1 counts every question.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, PreparedInstance};

/// Candidate indices by descending score; ties keep ascending index order.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Labels read off in ranked order.
fn ranked_labels<'a>(ranking: &'a [usize], labels: &'a [u8]) -> impl Iterator<Item = bool> + 'a {
    ranking.iter().map(move |&i| labels[i] == 1)
}

/// Mean over positive positions `k` of `(positives in top k) / k`.
pub fn average_precision(ranking: &[usize], labels: &[u8]) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0.0);
    for (k, positive) in ranked_labels(ranking, labels).enumerate() {
        if positive {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::NoPositive);
    }
    Ok(total / hits as f64)
}

pub fn reciprocal_rank(ranking: &[usize], labels: &[u8]) -> Result<f64> {
    ranked_labels(ranking, labels)
        .position(|p| p)
        .map(|k| 1.0 / (k + 1) as f64)
        .ok_or(Error::NoPositive)
}

/// Label of the top-ranked candidate; 0 for an empty ranking.
pub fn precision_at_1(ranking: &[usize], labels: &[u8]) -> f64 {
    ranking.first().map_or(0.0, |&i| f64::from(labels[i]))
}

/// Mean of per-question P@1 values.
pub fn top1_accuracy(p_at_1: &[f64]) -> f64 {
    if p_at_1.is_empty() {
        return 0.0;
    }
    p_at_1.iter().sum::<f64>() / p_at_1.len() as f64
}

/// One question's candidates in ranked order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub qid: String,
    pub order: Vec<usize>,
    pub labels: Vec<u8>,
}

/// Model scores for every candidate of one question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionScores {
    pub qid: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl QuestionScores {
    pub fn ranked(&self) -> RankedList {
        RankedList {
            qid: self.qid.clone(),
            order: rank(&self.scores),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "MAP")]
    pub map: f64,
    #[serde(rename = "MRR")]
    pub mrr: f64,
    #[serde(rename = "P@1")]
    pub p_at_1: f64,
    pub top1_accuracy: f64,
    pub n_questions_scored: usize,
    pub n_questions_skipped: usize,
}

impl EvalReport {
    pub fn from_rankings(lists: &[RankedList]) -> EvalReport {
        let (mut ap, mut rr, mut p1) = (Vec::new(), Vec::new(), Vec::new());
        for list in lists {
            p1.push(precision_at_1(&list.order, &list.labels));
            if let (Ok(a), Ok(r)) = (
                average_precision(&list.order, &list.labels),
                reciprocal_rank(&list.order, &list.labels),
            ) {
                ap.push(a);
                rr.push(r);
            }
        }
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let top1 = top1_accuracy(&p1);
        EvalReport {
            map: mean(&ap),
            mrr: mean(&rr),
            p_at_1: top1,
            top1_accuracy: top1,
            n_questions_scored: ap.len(),
            n_questions_skipped: lists.len() - ap.len(),
        }
    }

    pub fn from_scores(scores: &[QuestionScores]) -> EvalReport {
        let lists: Vec<RankedList> = scores.iter().map(QuestionScores::ranked).collect();
        Self::from_rankings(&lists)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Scores every candidate of every question with the model's probability.
pub fn score_split(model: &Model, split: &[PreparedInstance]) -> Result<Vec<QuestionScores>> {
    split
        .iter()
        .map(|inst| {
            Ok(QuestionScores {
                qid: inst.qid.clone(),
                scores: model.predict(inst)?.into_iter().map(|o| o.prob).collect(),
                labels: inst.labels(),
            })
        })
        .collect()
}

pub fn evaluate(model: &Model, split: &[PreparedInstance]) -> Result<EvalReport> {
    Ok(EvalReport::from_scores(&score_split(model, split)?))
}

/// `qid \t candidate_index \t score \t label` lines in original candidate order.
pub fn run_file(scores: &[QuestionScores]) -> String {
    let mut out = String::from("qid\tcand\tscore\tlabel\n");
    for q in scores {
        for (i, (s, l)) in q.scores.iter().zip(&q.labels).enumerate() {
            writeln!(out, "{}\t{i}\t{s:.17e}\t{l}", q.qid).expect("string write");
        }
    }
    out
}

pub fn write_run_file(path: &Path, scores: &[QuestionScores]) -> Result<()> {
    std::fs::write(path, run_file(scores)).map_err(|e| Error::io(path, e))
}
