//! Mini-batch training with Adam and early stopping on dev MAP.
//!
//! Batches are formed from whole questions, added in shuffled order until
//! the batch holds at least `batch_size` question/answer pairs, so each
//! question is encoded once per step and shared by its candidates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, GradBuffer, Graph};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{Model, PreparedInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub max_epochs: usize,
    /// Epochs without a dev-MAP improvement before stopping.
    pub patience: usize,
    /// Stop as soon as the mean training loss falls to this value.
    pub target_loss: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: 50,
            patience: 10,
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-pair cross-entropy over the epoch, regularizer excluded.
    pub train_loss: f64,
    pub dev: Option<EvalReport>,
    /// Best dev MAP seen up to and including this epoch.
    pub best_dev_map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds on return.
    pub best_epoch: usize,
    pub best_dev: Option<EvalReport>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_loss)
    }
}

/// Groups question indices into batches of at least `batch_size` pairs.
pub fn question_batches(
    split: &[PreparedInstance],
    order: &[usize],
    batch_size: usize,
) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut pairs = 0;
    for &q in order {
        current.push(q);
        pairs += split[q].candidates.len();
        if pairs >= batch_size {
            batches.push(std::mem::take(&mut current));
            pairs = 0;
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// One pass over `split`; returns the mean per-pair cross-entropy.
pub fn train_epoch(
    model: &mut Model,
    optimizer: &mut Adam,
    split: &[PreparedInstance],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..split.len()).collect();
    order.shuffle(rng);
    let mut grads = GradBuffer::new(&model.store);
    let (mut sum, mut pairs) = (0.0, 0usize);
    for batch in question_batches(split, &order, model.config.batch_size) {
        let instances: Vec<&PreparedInstance> = batch.iter().map(|&q| &split[q]).collect();
        let dropout_seed: u64 = rng.gen();
        let (data, gradients) = {
            let mut g = Graph::training(&model.store, dropout_seed);
            let loss = model.batch_loss(&mut g, &instances)?;
            let total = g.value(loss.total).item();
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("training loss {total}")));
            }
            pairs += loss.pairs;
            (g.value(loss.data).item(), g.backward(loss.total)?)
        };
        sum += data;
        grads.zero();
        grads.accumulate(&model.store, &gradients);
        optimizer.step(&mut model.store, &grads);
    }
    Ok(if pairs == 0 { 0.0 } else { sum / pairs as f64 })
}

/// Trains until `max_epochs`, the patience budget or the target loss is
/// reached. With a nonempty dev split the model ends on its best-dev-MAP
/// parameters; otherwise on the last epoch's.
pub fn train(
    model: &mut Model,
    train: &[PreparedInstance],
    dev: &[PreparedInstance],
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x6b61_7161);
    let mut optimizer = Adam::new(model.config.learning_rate, &model.store);
    let mut history = Vec::new();
    let mut best: Option<(usize, EvalReport, Vec<crate::autodiff::Tensor>)> = None;
    let mut since_best = 0;
    for epoch in 0..options.max_epochs {
        let train_loss = train_epoch(model, &mut optimizer, train, &mut rng)?;
        let dev_report = if dev.is_empty() {
            None
        } else {
            Some(evaluate(model, dev)?)
        };
        if let Some(report) = dev_report {
            if best.as_ref().is_none_or(|(_, b, _)| report.map > b.map) {
                best = Some((epoch, report, model.store.snapshot()));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev: dev_report,
            best_dev_map: best.as_ref().map(|(_, b, _)| b.map),
        });
        if since_best >= options.patience || options.target_loss.is_some_and(|t| train_loss <= t) {
            break;
        }
    }
    let last = history.len().saturating_sub(1);
    Ok(match best {
        Some((epoch, report, values)) => {
            model.store.restore(&values);
            TrainOutcome {
                history,
                best_epoch: epoch,
                best_dev: Some(report),
            }
        }
        None => TrainOutcome {
            history,
            best_epoch: last,
            best_dev: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PreparedCandidate, SentenceInput};

    fn instance(n: usize) -> PreparedInstance {
        let s = SentenceInput {
            words: vec![2],
            candidates: vec![None],
            graph: None,
        };
        PreparedInstance {
            qid: String::new(),
            question: s.clone(),
            candidates: (0..n)
                .map(|i| PreparedCandidate {
                    input: s.clone(),
                    features: [0.0; 4],
                    label: u8::from(i == 0),
                })
                .collect(),
        }
    }

    #[test]
    fn batches_hold_whole_questions() {
        let split: Vec<PreparedInstance> = [3, 5, 2, 4, 1].into_iter().map(instance).collect();
        let order = [0, 1, 2, 3, 4];
        assert_eq!(
            question_batches(&split, &order, 6),
            vec![vec![0, 1], vec![2, 3], vec![4]]
        );
        assert_eq!(
            question_batches(&split, &order, 1),
            vec![vec![0], vec![1], vec![2], vec![3], vec![4]]
        );
        let all: Vec<usize> = question_batches(&split, &[4, 2, 0, 3, 1], 100).concat();
        assert_eq!(all, vec![4, 2, 0, 3, 1]);
    }

    #[test]
    fn pad_row_stays_zero_and_entities_stay_fixed() {
        use crate::data::PAD;
        use crate::model::fixture::{tiny_config, tiny_instance, tiny_model};
        use crate::model::Variant;

        let mut inst = tiny_instance();
        inst.question.words.push(PAD);
        inst.question.candidates.push(None);
        let mut model = tiny_model(tiny_config(Variant::Ckann));
        let (words, entities) = (model.words, model.entities);
        let before = model.store.snapshot();
        let options = TrainOptions {
            max_epochs: 5,
            ..TrainOptions::default()
        };
        train(&mut model, &[inst], &[], &options).unwrap();
        assert!(model.store.value(words).row(PAD).iter().all(|&x| x == 0.0));
        assert_ne!(model.store.value(words), &before[words.index()]);
        assert_eq!(model.store.value(entities), &before[entities.index()]);
    }
}
