//! Student training by SGD on the mixed hard-label / distillation loss.

mod loss;
mod model;

pub use loss::{avg1_loss, ce_loss, kd_loss, loss_and_gradient, loss_gradient, total_loss};
pub use model::{forward, Gradients, StudentModel};

use std::time::Instant;

use crate::config::DistillConfig;
use crate::datagen::{derive_seed, Dataset, Prng};
use crate::ensemble::{LabelVector, TargetSet};
use crate::error::{Result, UkdError};
use crate::matrix::Matrix;
use crate::numerics::{argmax, softmax_into, Temperature};

/// Seed stream used for minibatch shuffling inside [`train`].
const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// One minibatch with its rows of the target set.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Matrix,
    pub labels: LabelVector,
    pub targets: TargetSet,
}

impl Batch {
    pub fn new(features: Matrix, labels: LabelVector, targets: TargetSet) -> Result<Self> {
        if features.rows() == 0 {
            return Err(UkdError::precondition("empty batch"));
        }
        if features.rows() != labels.len() || targets.n().is_some_and(|n| n != labels.len()) {
            return Err(UkdError::dims("batch features, labels and targets disagree"));
        }
        Ok(Batch {
            features,
            labels,
            targets,
        })
    }

    /// Rows `indices` of a dataset and its target set.
    pub fn gather(data: &Dataset, targets: &TargetSet, indices: &[usize]) -> Result<Self> {
        Batch::new(
            data.features.select_rows(indices),
            data.labels.select(indices),
            targets.select_rows(indices),
        )
    }
}

/// Loss and parameter gradients on a batch, without updating the model.
pub fn parameter_gradients(
    model: &StudentModel,
    batch: &Batch,
    config: &DistillConfig,
) -> Result<(f64, Gradients)> {
    let (logits, cache) = model::forward_cached(model, &batch.features)?;
    let (loss, dlogits) = loss_and_gradient(&logits, &batch.labels, &batch.targets, config)?;
    Ok((loss, model::backward(model, &batch.features, &cache, &dlogits)))
}

/// One SGD step. Returns the loss measured before the update.
pub fn backward_step(model: &mut StudentModel, batch: &Batch, config: &DistillConfig) -> Result<f64> {
    let (loss, grads) = parameter_gradients(model, batch, config)?;
    if !loss.is_finite() {
        return Err(UkdError::Numerical(format!("non-finite batch loss {loss}")));
    }
    if !grads.is_finite() {
        return Err(UkdError::Numerical("non-finite parameter gradient".into()));
    }
    model.sgd_step(&grads, config.lr);
    if !model.is_finite() {
        return Err(UkdError::Numerical("parameters diverged after SGD step".into()));
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: StudentModel,
    /// Sample-weighted mean pre-step loss of each epoch.
    pub loss_trace: Vec<f64>,
    /// Wall-clock seconds spent in each epoch.
    pub epoch_seconds: Vec<f64>,
}

/// Runs `config.epochs` passes of shuffled minibatch SGD.
///
/// Batch order comes from a splitmix64 stream derived from `config.seed`, so
/// `(model_init, data, targets, config)` fully determine the result.
pub fn train(
    model_init: StudentModel,
    data: &Dataset,
    targets: &TargetSet,
    config: &DistillConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = data.len();
    if targets.n().is_some_and(|t| t != n) {
        return Err(UkdError::dims(format!(
            "dataset has {n} samples, targets have {}",
            targets.n().unwrap_or(0)
        )));
    }
    if targets.strategy() != config.strategy {
        return Err(UkdError::StrategyMismatch(format!(
            "targets were built for {} but config requests {}",
            targets.strategy(),
            config.strategy
        )));
    }
    let mut model = model_init;
    let mut rng = Prng::new(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        if n == 0 {
            return Err(UkdError::precondition("cannot train on an empty dataset"));
        }
        let start = Instant::now();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::gather(data, targets, chunk)?;
            total += backward_step(&mut model, &batch, config)? * chunk.len() as f64;
        }
        loss_trace.push(total / n as f64);
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(TrainOutcome {
        model,
        loss_trace,
        epoch_seconds,
    })
}

/// Predicted class of every sample.
pub fn predict(model: &StudentModel, features: &Matrix) -> Result<Vec<usize>> {
    let logits = forward(model, features)?;
    let mut p = vec![0.0; model.classes()];
    Ok(logits
        .iter_rows()
        .map(|row| {
            softmax_into(row, Temperature::ONE, &mut p);
            argmax(&p)
        })
        .collect())
}

/// Top-1 accuracy on a labelled dataset.
pub fn evaluate(model: &StudentModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(UkdError::precondition("cannot evaluate on an empty dataset"));
    }
    let preds = predict(model, &data.features)?;
    let hits = preds
        .iter()
        .zip(data.labels.as_slice())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
