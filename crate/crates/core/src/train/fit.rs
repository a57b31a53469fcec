//! The mini-batch epoch loop.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{Gradients, Model};
use crate::rng::RngState;
use crate::tensor::{argmax, Tensor};
use crate::train::loss::{sample_gradients, sparse_ce_loss};
use crate::train::optim::{Optimizer, OptimizerKind};
use crate::train::report::{EpochRecord, TrainReport};

/// One training or validation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub label: usize,
}

impl Example {
    pub fn new(input: Tensor, label: usize) -> Self {
        Self { input, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Fan per-sample passes out to the rayon pool. Results are reduced in
    /// sample order, so the outcome matches the sequential path.
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            epochs: 70,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            parallel: false,
        }
    }
}

/// A per-sample input transform applied during training only.
pub trait Augment: Sync {
    fn augment(&self, input: &Tensor, rng: &mut RngState) -> Result<Tensor>;
}

/// Leaves inputs untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoAugment;

impl Augment for NoAugment {
    fn augment(&self, input: &Tensor, _rng: &mut RngState) -> Result<Tensor> {
        Ok(input.clone())
    }
}

fn check_labels(set: &[Example], classes: usize) -> Result<()> {
    match set.iter().find(|e| e.label >= classes) {
        Some(e) => Err(Error::LabelOutOfRange { label: e.label, classes }),
        None => Ok(()),
    }
}

fn map_maybe_parallel<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Mean loss and accuracy of `model` over `set`, or `None` for an empty set.
pub fn loss_and_accuracy(model: &Model, set: &[Example], parallel: bool) -> Result<Option<(f64, f64)>> {
    if set.is_empty() {
        return Ok(None);
    }
    let per_sample = map_maybe_parallel(set, parallel, |e| -> Result<(f64, bool)> {
        let probs = model.forward(&e.input)?;
        let loss = f64::from(sparse_ce_loss(&probs, e.label)?);
        Ok((loss, argmax(probs.as_slice()) == Some(e.label)))
    });
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in per_sample {
        let (l, ok) = r?;
        loss += l;
        correct += ok as usize;
    }
    let n = set.len() as f64;
    Ok(Some((loss / n, correct as f64 / n)))
}

pub fn fit(model: &mut Model, train: &[Example], val: &[Example], options: &FitOptions, rng: &mut RngState) -> Result<TrainReport> {
    fit_with(model, train, val, options, rng, &NoAugment)
}

/// Trains `model` in place.
///
/// Each epoch shuffles the training order with `rng`, walks it in batches of
/// `batch_size` (the last batch may be short), averages the per-sample
/// gradients of every batch and applies one optimizer step to the non-frozen
/// parameters. Validation runs after the epoch's updates. Augmentation draws
/// from a stream keyed by epoch and sample index, so it does not depend on
/// thread scheduling.
pub fn fit_with(
    model: &mut Model,
    train: &[Example],
    val: &[Example],
    options: &FitOptions,
    rng: &mut RngState,
    augment: &dyn Augment,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    if !(options.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            options.learning_rate
        )));
    }
    let classes = model.output_width();
    check_labels(train, classes)?;
    check_labels(val, classes)?;

    let mut optimizer = Optimizer::new(options.optimizer, options.learning_rate, model);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=options.epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let aug_stream = rng.fork(epoch as u64);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;

        for batch in order.chunks(options.batch_size) {
            let snapshot: &Model = model;
            let outcomes = map_maybe_parallel(batch, options.parallel, |&i| {
                let example = &train[i];
                let input = augment.augment(&example.input, &mut aug_stream.fork(i as u64))?;
                sample_gradients(snapshot, &input, example.label)
            });
            let mut grads = Gradients::zeros_for(model);
            for (&i, outcome) in batch.iter().zip(outcomes) {
                let outcome = outcome?;
                loss_sum += f64::from(outcome.loss);
                correct += (argmax(outcome.probs.as_slice()) == Some(train[i].label)) as usize;
                grads.accumulate(&outcome.grads)?;
            }
            grads.scale(1.0 / batch.len() as f32);
            optimizer.step(model, &grads)?;
        }

        let val_stats = loss_and_accuracy(model, val, options.parallel)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_loss: val_stats.map(|s| s.0),
            val_acc: val_stats.map(|s| s.1),
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4} acc {:.4} val_acc {}",
            options.epochs,
            record.train_loss,
            record.train_acc,
            record.val_acc.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"))
        );
        report.epochs.push(record);
    }
    Ok(report)
}
