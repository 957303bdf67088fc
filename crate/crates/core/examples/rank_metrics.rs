//! MAP, MRR and P@1 over scored candidate lists. Questions without a
//! positive candidate are skipped.

use kaqa::eval::{average_precision, rank, reciprocal_rank, EvalReport, QuestionScores};

fn main() -> kaqa::Result<()> {
    let questions = vec![
        QuestionScores {
            qid: "q1".into(),
            scores: vec![0.9, 0.2, 0.4],
            labels: vec![1, 0, 1],
        },
        QuestionScores {
            qid: "q2".into(),
            scores: vec![0.1, 0.8, 0.3, 0.6],
            labels: vec![0, 0, 0, 1],
        },
        QuestionScores {
            qid: "q3".into(),
            scores: vec![0.5, 0.7],
            labels: vec![0, 0],
        },
    ];
    for q in &questions {
        let order = rank(&q.scores);
        if q.labels.contains(&1) {
            println!(
                "{}: ranking {order:?}, AP {:.4}, RR {:.4}",
                q.qid,
                average_precision(&order, &q.labels)?,
                reciprocal_rank(&order, &q.labels)?
            );
        } else {
            println!("{}: no positive candidate, skipped", q.qid);
        }
    }
    println!("{}", EvalReport::from_scores(&questions).to_json());
    Ok(())
}
