//! Momentum SGD with validation early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{LossKind, TrainConfig};
use super::data::{env_of, validate_examples, LabeledExample, TrainingStats};
use super::losses::draw_undersample_indices;
use super::model::LinearModel;
use super::rng::epoch_rng;
use crate::error::{Error, Result};
use crate::metrics::xent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the epoch's mini-batches; absent for epoch 0.
    pub train_objective: Option<f64>,
    pub valid_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation NLL.
    pub model: LinearModel,
    pub best_epoch: usize,
    pub best_valid_nll: f64,
    pub history: Vec<EpochRecord>,
}

pub fn mean_nll(model: &LinearModel, data: &[LabeledExample]) -> f64 {
    data.iter()
        .map(|e| xent(model.predict(&e.features), e.y))
        .sum::<f64>()
        / data.len() as f64
}

fn sampling_weights(kind: LossKind, data: &[LabeledExample], stats: &TrainingStats) -> Result<Vec<f64>> {
    data.iter()
        .map(|e| match kind {
            LossKind::UndersampleEnv => Ok(stats.env_weight(env_of(e)?)),
            _ => Ok(stats.label_weight(e.y)),
        })
        .collect()
}

/// Trains a zero-initialized linear model.
///
/// Each epoch visits a seeded permutation of the training set (or, for the
/// undersampling losses, `n` fresh weighted draws) in mini-batches and
/// applies `v <- momentum * v + grad; theta <- theta - lr * v`. Training stops
/// after `patience` epochs without a strict improvement of the validation
/// NLL, or after `max_epochs`. Epoch 0 in the history is the initial model.
pub fn train(
    config: &TrainConfig,
    train_data: &[LabeledExample],
    valid_data: &[LabeledExample],
) -> Result<TrainOutcome> {
    config.validate()?;
    let dim = validate_examples(train_data)?;
    let valid_dim = validate_examples(valid_data)?;
    if dim != valid_dim {
        return Err(Error::Config(format!(
            "train has {dim} features, valid has {valid_dim}"
        )));
    }
    if config.loss_kind.needs_env() {
        for e in train_data {
            env_of(e)?;
        }
    }

    let stats = TrainingStats::from_examples(train_data);
    let undersample_weights = if config.loss_kind.is_undersampling() {
        Some(sampling_weights(config.loss_kind, train_data, &stats)?)
    } else {
        None
    };

    let mut model = LinearModel::zeros(dim);
    let mut velocity = vec![0.0; model.num_params()];
    let mut params = model.params();

    let initial_nll = mean_nll(&model, valid_data);
    let mut best = (model.clone(), 0usize, initial_nll);
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_objective: None,
        valid_nll: initial_nll,
    }];
    let mut stale = 0usize;

    for epoch in 1..=config.max_epochs {
        let order: Vec<usize> = match &undersample_weights {
            Some(w) => draw_undersample_indices(w, config.hyper_value()?, config.seed, epoch as u64)?,
            None => {
                let mut idx: Vec<usize> = (0..train_data.len()).collect();
                idx.shuffle(&mut epoch_rng(config.seed, epoch as u64));
                idx
            }
        };

        let mut objective_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &train_data[i]).collect();
            let eval = config.objective(&model, &batch, &stats)?;
            if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step: steps,
                    message: format!("objective {}", eval.value),
                });
            }
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&eval.grad) {
                *v = config.momentum * *v + g;
                *p -= config.lr * *v;
            }
            model.set_params(&params);
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: steps,
                    message: "non-finite parameters".into(),
                });
            }
            objective_sum += eval.value;
            steps += 1;
        }

        let valid_nll = mean_nll(&model, valid_data);
        history.push(EpochRecord {
            epoch,
            train_objective: Some(objective_sum / steps.max(1) as f64),
            valid_nll,
        });
        if valid_nll < best.2 {
            best = (model.clone(), epoch, valid_nll);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        best_valid_nll: best.2,
        history,
    })
}
