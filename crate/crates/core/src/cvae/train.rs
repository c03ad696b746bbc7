//! Stage training loop and stage-2 input preparation.

use std::path::PathBuf;

use rand::seq::SliceRandom;

use super::{sample_standard_normal, CvaeArch, CvaeStage, StageIndex, StageVars};
use crate::autodiff::{AdamConfig, AdamState, Real, Tape, Tensor, Var};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::seeds;

/// What a stage trains on: images for stage 1, stage-1 posterior encodings
/// for stage 2.
pub enum StageInput<'a> {
    Images(&'a LabeledDataset),
    Codes {
        codes: &'a Tensor,
        labels: &'a [usize],
        num_classes: usize,
    },
}

#[derive(Debug, Clone)]
pub struct StageTrainOptions {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Real,
    pub seed: u64,
    /// When set, the trained stage is written here.
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: Real,
    pub recon: Real,
    pub kl: Real,
}

pub struct StageTrainResult {
    pub stage: CvaeStage,
    pub curve: Vec<EpochLoss>,
}

impl StageTrainResult {
    pub fn final_loss(&self) -> Option<&EpochLoss> {
        self.curve.last()
    }
}

/// Train one conditional stage. Deterministic per seed: weight
/// initialization, epoch shuffles, and reparameterization noise all derive
/// from `options.seed`.
pub fn train_stage(
    input: &StageInput,
    stage_index: StageIndex,
    options: &StageTrainOptions,
) -> Result<StageTrainResult> {
    let (flat, labels, num_classes) = match input {
        StageInput::Images(dataset) => {
            if dataset.is_empty() {
                return Err(Error::Usage("cannot train on an empty dataset".into()));
            }
            (
                dataset.flat_images(),
                dataset.labels().to_vec(),
                dataset.num_classes(),
            )
        }
        StageInput::Codes {
            codes,
            labels,
            num_classes,
        } => {
            let shape = codes.shape();
            if shape.len() != 2 || shape[0] != labels.len() {
                return Err(Error::Dimension(format!(
                    "codes {shape:?} vs {} labels",
                    labels.len()
                )));
            }
            if labels.is_empty() {
                return Err(Error::Usage("cannot train on an empty code set".into()));
            }
            ((*codes).clone(), labels.to_vec(), *num_classes)
        }
    };
    if options.epochs == 0 || options.batch_size == 0 {
        return Err(Error::Parameter(
            "epochs and batch_size must be positive".into(),
        ));
    }

    let arch = CvaeArch {
        input_dim: flat.shape()[1],
        num_classes,
        latent_dim: options.latent_dim,
        hidden_dim: options.hidden_dim,
        stage: stage_index,
    };
    let mut init_rng = seeds::rng(seeds::derive(options.seed, "stage-init"));
    let mut stage = CvaeStage::new(arch, &mut init_rng)?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(options.learning_rate));

    let n = labels.len();
    let mut curve = Vec::with_capacity(options.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..options.epochs {
        let mut shuffle_rng = seeds::rng(seeds::derive_indexed(
            options.seed,
            "stage-epoch",
            &[epoch as u64],
        ));
        order.shuffle(&mut shuffle_rng);

        let mut sums = (0.0, 0.0, 0.0);
        for (batch_index, chunk) in order.chunks(options.batch_size).enumerate() {
            let (inputs, conditions) = gather_rows(&flat, &labels, chunk);
            let mut eps_rng = seeds::rng(seeds::derive_indexed(
                options.seed,
                "stage-eps",
                &[epoch as u64, batch_index as u64],
            ));
            let eps =
                sample_standard_normal(vec![conditions.len(), options.latent_dim], &mut eps_rng);

            let mut tape = Tape::new();
            let vars = stage.bind(&mut tape);
            let (total, recon, kl) = stage
                .loss_on_tape(&mut tape, &vars, &inputs, &conditions, &eps)
                .map_err(|e| diverged(e, stage_index, epoch, batch_index))?;

            let weight = conditions.len() as Real;
            sums.0 += tape.value(total).item()? * weight;
            sums.1 += tape.value(recon).item()? * weight;
            sums.2 += tape.value(kl).item()? * weight;

            let var_order = vars.in_param_order();
            let grads = tape
                .backward(total)
                .map_err(|e| diverged(e, stage_index, epoch, batch_index))?;
            let grad_tensors: Vec<Tensor> = var_order
                .iter()
                .zip(stage.params())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
            let mut params = stage.params_mut();
            adam.step(&mut params, &grad_refs)?;
        }

        curve.push(EpochLoss {
            epoch,
            total: sums.0 / n as Real,
            recon: sums.1 / n as Real,
            kl: sums.2 / n as Real,
        });
    }

    if let Some(path) = &options.checkpoint_path {
        stage.save(path)?;
    }
    Ok(StageTrainResult { stage, curve })
}

/// Stage-1 posterior means of every example, paired with its labels; the
/// training set of stage 2.
pub fn posterior_means(
    stage1: &CvaeStage,
    dataset: &LabeledDataset,
) -> Result<(Tensor, Vec<usize>)> {
    encode_dataset(stage1, dataset, None)
}

/// Reparameterized stage-1 draws instead of means; the config-flagged
/// alternative stage-2 input.
pub fn posterior_samples(
    stage1: &CvaeStage,
    dataset: &LabeledDataset,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    encode_dataset(stage1, dataset, Some(seed))
}

fn encode_dataset(
    stage1: &CvaeStage,
    dataset: &LabeledDataset,
    sample_seed: Option<u64>,
) -> Result<(Tensor, Vec<usize>)> {
    let k = stage1.latent_dim();
    let mut codes = Tensor::zeros(vec![dataset.len(), k]);
    let chunk = 256;
    for start in (0..dataset.len()).step_by(chunk) {
        let end = (start + chunk).min(dataset.len());
        let indices: Vec<usize> = (start..end).collect();
        let (images, conditions) = dataset.gather(&indices);
        let encoded = stage1.encode(&images, &conditions)?;
        let values = match sample_seed {
            None => encoded.mu,
            Some(seed) => {
                let mut rng = seeds::rng(seeds::derive_indexed(
                    seed,
                    "posterior-sample",
                    &[start as u64],
                ));
                let eps = sample_standard_normal(vec![conditions.len(), k], &mut rng);
                super::reparameterize(&encoded, &eps)?
            }
        };
        codes.data_mut()[start * k..end * k].copy_from_slice(values.data());
    }
    Ok((codes, dataset.labels().to_vec()))
}

fn gather_rows(flat: &Tensor, labels: &[usize], indices: &[usize]) -> (Tensor, Vec<usize>) {
    let d = flat.shape()[1];
    let mut out = Tensor::zeros(vec![indices.len(), d]);
    let mut conds = Vec::with_capacity(indices.len());
    for (row, &i) in indices.iter().enumerate() {
        out.data_mut()[row * d..(row + 1) * d].copy_from_slice(&flat.data()[i * d..(i + 1) * d]);
        conds.push(labels[i]);
    }
    (out, conds)
}

fn diverged(e: Error, stage: StageIndex, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(message) => Error::NonFinite(format!(
            "stage-{} training diverged at epoch {epoch}, batch {batch}: {message}",
            stage.number()
        )),
        other => other,
    }
}

impl StageVars {
    pub(crate) fn in_param_order(&self) -> [Var; 15] {
        [
            self.enc_hidden1.weights,
            self.enc_hidden1.bias,
            self.enc_hidden2.weights,
            self.enc_hidden2.bias,
            self.enc_mu.weights,
            self.enc_mu.bias,
            self.enc_logvar.weights,
            self.enc_logvar.bias,
            self.dec_hidden1.weights,
            self.dec_hidden1.bias,
            self.dec_hidden2.weights,
            self.dec_hidden2.bias,
            self.dec_out.weights,
            self.dec_out.bias,
            self.log_gamma,
        ]
    }

    #[cfg(test)]
    pub(crate) fn from_slice(vars: &[Var]) -> Self {
        use crate::autodiff::DenseVars;
        let dense = |i: usize| DenseVars {
            weights: vars[i],
            bias: vars[i + 1],
        };
        Self {
            enc_hidden1: dense(0),
            enc_hidden2: dense(2),
            enc_mu: dense(4),
            enc_logvar: dense(6),
            dec_hidden1: dense(8),
            dec_hidden2: dense(10),
            dec_out: dense(12),
            log_gamma: vars[14],
        }
    }
}
