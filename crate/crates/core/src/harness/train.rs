//! Classifier training with a held-out validation report.

use std::path::PathBuf;

use super::{Classifier, ClassifierVars};
use crate::autodiff::{AdamConfig, AdamState, DropoutMode, Real, Tape, Tensor, Var};
use crate::datasets::{split, BatchIterator, LabeledDataset};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone)]
pub struct ClassifierTrainOptions {
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout_rate: Real,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Real,
    pub val_fraction: f64,
    pub seed: u64,
    /// When set, the trained classifier is written here.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for ClassifierTrainOptions {
    fn default() -> Self {
        Self {
            hidden1: 128,
            hidden2: 64,
            dropout_rate: 0.5,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            val_fraction: 0.2,
            seed: 0,
            checkpoint_path: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub final_loss: Real,
    pub epochs: usize,
    pub train_examples: usize,
    pub val_examples: usize,
}

/// Train a dropout-bearing classifier; deterministic per seed. Aborts with a
/// diagnostic if the loss goes non-finite.
pub fn train_classifier(
    dataset: &LabeledDataset,
    options: &ClassifierTrainOptions,
) -> Result<(Classifier, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Usage("cannot train on an empty dataset".into()));
    }
    if options.epochs == 0 {
        return Err(Error::Parameter("epochs must be positive".into()));
    }
    let (train, val) = split(
        dataset,
        1.0 - options.val_fraction,
        seeds::derive(options.seed, "classifier-split"),
    )?;

    let mut init_rng = seeds::rng(seeds::derive(options.seed, "classifier-init"));
    let mut model = Classifier::new(
        dataset.input_dim(),
        options.hidden1,
        options.hidden2,
        dataset.num_classes(),
        options.dropout_rate,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(options.learning_rate));
    let batches = BatchIterator::new(
        options.batch_size,
        seeds::derive(options.seed, "classifier-batches"),
    )?;

    let mut final_loss = 0.0;
    for epoch in 0..options.epochs {
        let mut epoch_loss = 0.0;
        for (batch_index, (images, labels)) in batches.epoch(&train, epoch as u64).enumerate() {
            let mut dropout_rng = seeds::rng(seeds::derive_indexed(
                options.seed,
                "classifier-dropout",
                &[epoch as u64, batch_index as u64],
            ));
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let x = tape.leaf(&images);
            let logits = model
                .logits_on_tape(
                    &mut tape,
                    &vars,
                    x,
                    DropoutMode::Train,
                    Some(&mut dropout_rng),
                )
                .map_err(|e| diverged(e, epoch, batch_index))?;
            let loss = tape.cross_entropy(logits, &labels)?;
            epoch_loss += tape.value(loss).item()? * labels.len() as Real;

            let var_order = vars.in_param_order();
            let grads = tape
                .backward(loss)
                .map_err(|e| diverged(e, epoch, batch_index))?;
            let grad_tensors: Vec<Tensor> = var_order
                .iter()
                .zip(model.params())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
            let mut params = model.params_mut();
            adam.step(&mut params, &grad_refs)?;
        }
        final_loss = epoch_loss / train.len() as Real;
    }

    let report = TrainReport {
        train_accuracy: accuracy(&model, &train)?,
        val_accuracy: accuracy(&model, &val)?,
        final_loss,
        epochs: options.epochs,
        train_examples: train.len(),
        val_examples: val.len(),
    };
    if let Some(path) = &options.checkpoint_path {
        model.save(path)?;
    }
    Ok((model, report))
}

/// Fraction of examples whose deterministic prediction matches the label.
pub fn accuracy(model: &Classifier, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Usage("accuracy over an empty dataset".into()));
    }
    let mut correct = 0usize;
    let chunk = 256;
    for start in (0..dataset.len()).step_by(chunk) {
        let end = (start + chunk).min(dataset.len());
        let indices: Vec<usize> = (start..end).collect();
        let (images, labels) = dataset.gather(&indices);
        let (predicted, _) = model.predict_batch(&images)?;
        correct += predicted
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(message) => Error::NonFinite(format!(
            "classifier training diverged at epoch {epoch}, batch {batch}: {message}"
        )),
        other => other,
    }
}

impl ClassifierVars {
    pub(crate) fn in_param_order(&self) -> [Var; 6] {
        [
            self.hidden1.weights,
            self.hidden1.bias,
            self.hidden2.weights,
            self.hidden2.bias,
            self.output.weights,
            self.output.bias,
        ]
    }
}
