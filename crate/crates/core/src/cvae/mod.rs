//! Conditional VAE stages and the two-stage decode pipeline.
//!
//! A stage owns an encoder producing a Gaussian posterior (mean,
//! log-variance), a conditioned decoder, and a trainable scalar decoder
//! variance γ (stored as log γ so positivity is structural). Stage one maps
//! images to a latent space and squashes its reconstructions into `[0, 1]`;
//! stage two re-encodes stage-one codes and reconstructs them without
//! squashing. Conditioning is one-hot label concatenation on both the
//! encoder input and the decoder latent input.

mod train;

pub use train::{
    posterior_means, posterior_samples, train_stage, EpochLoss, StageInput, StageTrainOptions,
    StageTrainResult,
};

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Checkpoint, Dense, DenseVars, Real, Tape, Tensor, Var, LN_2PI};
use crate::error::{Error, Result};

/// Log-variance and log-γ are clamped to this symmetric range before
/// exponentiation; keeps small-data training from overflowing either the KL
/// term or the reconstruction weight.
pub const LOG_CLAMP: Real = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageIndex {
    One,
    Two,
}

impl StageIndex {
    pub fn number(self) -> u8 {
        match self {
            StageIndex::One => 1,
            StageIndex::Two => 2,
        }
    }

    fn from_number(n: u64) -> Result<Self> {
        match n {
            1 => Ok(StageIndex::One),
            2 => Ok(StageIndex::Two),
            other => Err(Error::Parse(format!("unknown stage index {other}"))),
        }
    }
}

/// Encoder output: per-example posterior mean and log-variance, `[b, κ]`
/// each. Log-variance arrives already clamped.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// A single latent vector tagged with the stage it lives in and the class
/// condition it was produced under.
#[derive(Debug, Clone)]
pub struct LatentCode {
    pub values: Vec<Real>,
    pub stage: StageIndex,
    pub condition: usize,
}

/// Architecture of one stage.
#[derive(Debug, Clone)]
pub struct CvaeArch {
    pub input_dim: usize,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub stage: StageIndex,
}

/// One conditional VAE stage: encoder parameters, decoder parameters, and
/// the trainable scale log γ.
#[derive(Debug, Clone)]
pub struct CvaeStage {
    arch: CvaeArch,
    enc_hidden1: Dense,
    enc_hidden2: Dense,
    enc_mu: Dense,
    enc_logvar: Dense,
    dec_hidden1: Dense,
    dec_hidden2: Dense,
    dec_out: Dense,
    log_gamma: Tensor,
}

pub(crate) struct StageVars {
    enc_hidden1: DenseVars,
    enc_hidden2: DenseVars,
    enc_mu: DenseVars,
    enc_logvar: DenseVars,
    dec_hidden1: DenseVars,
    dec_hidden2: DenseVars,
    dec_out: DenseVars,
    pub log_gamma: Var,
}

/// Loss values of one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: Real,
    pub recon: Real,
    pub kl: Real,
}

impl CvaeStage {
    pub fn new(arch: CvaeArch, rng: &mut ChaCha8Rng) -> Result<Self> {
        if arch.input_dim == 0 || arch.latent_dim == 0 || arch.hidden_dim == 0 {
            return Err(Error::Parameter("stage dimensions must be positive".into()));
        }
        if arch.num_classes == 0 {
            return Err(Error::Parameter("num_classes must be positive".into()));
        }
        let (d, c, k, h) = (
            arch.input_dim,
            arch.num_classes,
            arch.latent_dim,
            arch.hidden_dim,
        );
        Ok(Self {
            enc_hidden1: Dense::new(d + c, h, rng),
            enc_hidden2: Dense::new(h, h, rng),
            enc_mu: Dense::new(h, k, rng),
            enc_logvar: Dense::new(h, k, rng),
            dec_hidden1: Dense::new(k + c, h, rng),
            dec_hidden2: Dense::new(h, h, rng),
            dec_out: Dense::new(h, d, rng),
            log_gamma: Tensor::scalar(0.0).with_grad(),
            arch,
        })
    }

    pub fn stage(&self) -> StageIndex {
        self.arch.stage
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.arch.hidden_dim
    }

    /// Decoder variance γ = exp(log γ); positive by construction.
    pub fn gamma(&self) -> Real {
        self.log_gamma.data()[0].clamp(-LOG_CLAMP, LOG_CLAMP).exp()
    }

    pub(crate) fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.enc_hidden1.weights,
            &self.enc_hidden1.bias,
            &self.enc_hidden2.weights,
            &self.enc_hidden2.bias,
            &self.enc_mu.weights,
            &self.enc_mu.bias,
            &self.enc_logvar.weights,
            &self.enc_logvar.bias,
            &self.dec_hidden1.weights,
            &self.dec_hidden1.bias,
            &self.dec_hidden2.weights,
            &self.dec_hidden2.bias,
            &self.dec_out.weights,
            &self.dec_out.bias,
            &self.log_gamma,
        ]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.enc_hidden1.weights,
            &mut self.enc_hidden1.bias,
            &mut self.enc_hidden2.weights,
            &mut self.enc_hidden2.bias,
            &mut self.enc_mu.weights,
            &mut self.enc_mu.bias,
            &mut self.enc_logvar.weights,
            &mut self.enc_logvar.bias,
            &mut self.dec_hidden1.weights,
            &mut self.dec_hidden1.bias,
            &mut self.dec_hidden2.weights,
            &mut self.dec_hidden2.bias,
            &mut self.dec_out.weights,
            &mut self.dec_out.bias,
            &mut self.log_gamma,
        ]
    }

    const PARAM_NAMES: [&'static str; 15] = [
        "enc_hidden1.weights",
        "enc_hidden1.bias",
        "enc_hidden2.weights",
        "enc_hidden2.bias",
        "enc_mu.weights",
        "enc_mu.bias",
        "enc_logvar.weights",
        "enc_logvar.bias",
        "dec_hidden1.weights",
        "dec_hidden1.bias",
        "dec_hidden2.weights",
        "dec_hidden2.bias",
        "dec_out.weights",
        "dec_out.bias",
        "log_gamma",
    ];

    pub(crate) fn bind(&self, tape: &mut Tape) -> StageVars {
        StageVars {
            enc_hidden1: self.enc_hidden1.bind(tape),
            enc_hidden2: self.enc_hidden2.bind(tape),
            enc_mu: self.enc_mu.bind(tape),
            enc_logvar: self.enc_logvar.bind(tape),
            dec_hidden1: self.dec_hidden1.bind(tape),
            dec_hidden2: self.dec_hidden2.bind(tape),
            dec_out: self.dec_out.bind(tape),
            log_gamma: tape.param(&self.log_gamma),
        }
    }

    fn check_conditions(&self, conditions: &[usize]) -> Result<()> {
        if let Some(&bad) = conditions.iter().find(|&&c| c >= self.arch.num_classes) {
            return Err(Error::Parameter(format!(
                "condition {bad} out of range for {} classes",
                self.arch.num_classes
            )));
        }
        Ok(())
    }

    fn onehot(&self, conditions: &[usize]) -> Tensor {
        let c = self.arch.num_classes;
        let mut hot = Tensor::zeros(vec![conditions.len(), c]);
        for (row, &label) in conditions.iter().enumerate() {
            hot.data_mut()[row * c + label] = 1.0;
        }
        hot
    }

    fn check_input_batch(&self, inputs: &Tensor, conditions: &[usize]) -> Result<()> {
        let shape = inputs.shape();
        if shape.len() != 2 || shape[1] != self.arch.input_dim {
            return Err(Error::Dimension(format!(
                "expected inputs [batch, {}], got {shape:?}",
                self.arch.input_dim
            )));
        }
        if shape[0] != conditions.len() {
            return Err(Error::Dimension(format!(
                "{} inputs vs {} conditions",
                shape[0],
                conditions.len()
            )));
        }
        self.check_conditions(conditions)
    }

    pub(crate) fn encoder_forward(
        &self,
        tape: &mut Tape,
        vars: &StageVars,
        inputs_with_onehot: Var,
    ) -> Result<(Var, Var)> {
        let h = vars.enc_hidden1.forward(tape, inputs_with_onehot)?;
        let h = tape.relu(h)?;
        let h = vars.enc_hidden2.forward(tape, h)?;
        let h = tape.relu(h)?;
        let mu = vars.enc_mu.forward(tape, h)?;
        let logvar = vars.enc_logvar.forward(tape, h)?;
        let logvar = tape.clamp(logvar, -LOG_CLAMP, LOG_CLAMP)?;
        Ok((mu, logvar))
    }

    pub(crate) fn decoder_forward(
        &self,
        tape: &mut Tape,
        vars: &StageVars,
        codes: Var,
        onehot: Var,
    ) -> Result<Var> {
        let joined = tape.concat_cols(codes, onehot)?;
        let h = vars.dec_hidden1.forward(tape, joined)?;
        let h = tape.relu(h)?;
        let h = vars.dec_hidden2.forward(tape, h)?;
        let h = tape.relu(h)?;
        let out = vars.dec_out.forward(tape, h)?;
        match self.arch.stage {
            StageIndex::One => tape.sigmoid(out),
            StageIndex::Two => Ok(out),
        }
    }

    /// Encode a batch under its conditions. Deterministic given parameters:
    /// the condition is injected by one-hot concatenation to the input.
    pub fn encode(&self, inputs: &Tensor, conditions: &[usize]) -> Result<EncoderOutput> {
        self.check_input_batch(inputs, conditions)?;
        let joined = concat_cols_data(inputs, &self.onehot(conditions));
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.leaf(&joined);
        let (mu, logvar) = self.encoder_forward(&mut tape, &vars, x)?;
        Ok(EncoderOutput {
            mu: tape.value(mu).clone(),
            logvar: tape.value(logvar).clone(),
        })
    }

    /// Decode a batch of latent codes `[b, κ]` under per-example conditions.
    /// Stage-one outputs are squashed into `[0, 1]`; stage-two outputs are
    /// unbounded latent reconstructions.
    pub fn decode_batch(&self, codes: &Tensor, conditions: &[usize]) -> Result<Tensor> {
        let shape = codes.shape();
        if shape.len() != 2 || shape[1] != self.arch.latent_dim {
            return Err(Error::Dimension(format!(
                "expected codes [batch, {}], got {shape:?}",
                self.arch.latent_dim
            )));
        }
        if shape[0] != conditions.len() {
            return Err(Error::Dimension(format!(
                "{} codes vs {} conditions",
                shape[0],
                conditions.len()
            )));
        }
        self.check_conditions(conditions)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let z = tape.leaf(codes);
        let hot = tape.leaf(&self.onehot(conditions));
        let out = self.decoder_forward(&mut tape, &vars, z, hot)?;
        Ok(tape.value(out).clone())
    }

    /// Decode one tagged latent code. Rejects codes from the other stage.
    pub fn decode_code(&self, code: &LatentCode) -> Result<Tensor> {
        if code.stage != self.arch.stage {
            return Err(Error::Usage(format!(
                "stage-{} code passed to a stage-{} model",
                code.stage.number(),
                self.arch.stage.number()
            )));
        }
        if code.values.len() != self.arch.latent_dim {
            return Err(Error::Dimension(format!(
                "code length {} vs latent dimension {}",
                code.values.len(),
                self.arch.latent_dim
            )));
        }
        let codes = Tensor::new(vec![1, self.arch.latent_dim], code.values.clone())?;
        self.decode_batch(&codes, &[code.condition])
    }

    /// The VAE loss of one batch: Gaussian reconstruction negative
    /// log-likelihood under γ plus the KL divergence to the unit prior.
    /// Reparameterization noise is drawn from `rng`.
    pub fn vae_loss(
        &self,
        inputs: &Tensor,
        conditions: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<LossBreakdown> {
        if conditions.is_empty() {
            return Err(Error::Usage("vae_loss on an empty batch".into()));
        }
        self.check_input_batch(inputs, conditions)?;
        let eps = sample_standard_normal(vec![conditions.len(), self.arch.latent_dim], rng);
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let (total, recon, kl) = self.loss_on_tape(&mut tape, &vars, inputs, conditions, &eps)?;
        Ok(LossBreakdown {
            total: tape.value(total).item()?,
            recon: tape.value(recon).item()?,
            kl: tape.value(kl).item()?,
        })
    }

    /// Build the full loss graph; gradients reach every encoder/decoder
    /// parameter and log γ, but not the noise.
    pub(crate) fn loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &StageVars,
        inputs: &Tensor,
        conditions: &[usize],
        eps: &Tensor,
    ) -> Result<(Var, Var, Var)> {
        let batch = conditions.len();
        let dim = self.arch.input_dim as Real;
        let onehot = self.onehot(conditions);

        let enc_in = tape.leaf(&concat_cols_data(inputs, &onehot));
        let (mu, logvar) = self.encoder_forward(tape, vars, enc_in)?;

        // z = μ + exp(½·logvar) ⊙ ε
        let eps_leaf = tape.leaf(eps);
        let half_logvar = tape.scale(logvar, 0.5)?;
        let sigma = tape.exp(half_logvar)?;
        let noise = tape.mul(sigma, eps_leaf)?;
        let z = tape.add(mu, noise)?;

        let hot = tape.leaf(&onehot);
        let reconstruction = self.decoder_forward(tape, vars, z, hot)?;

        // Gaussian NLL: D/2·ln(2πγ) + ‖x − x̂‖² / (2γ), batch-averaged.
        let x = tape.leaf(inputs);
        let diff = tape.sub(x, reconstruction)?;
        let sq = tape.mul(diff, diff)?;
        let sum_sq = tape.sum_all(sq)?;
        let mean_sq = tape.scale(sum_sq, 1.0 / batch as Real)?;
        let log_gamma = tape.clamp(vars.log_gamma, -LOG_CLAMP, LOG_CLAMP)?;
        let scaled_lg = tape.scale(log_gamma, dim / 2.0)?;
        let nll_const = tape.add_const(scaled_lg, dim / 2.0 * LN_2PI)?;
        let neg_lg = tape.scale(log_gamma, -1.0)?;
        let inv_gamma = tape.exp(neg_lg)?;
        let weighted = tape.mul(inv_gamma, mean_sq)?;
        let half_weighted = tape.scale(weighted, 0.5)?;
        let recon = tape.add(nll_const, half_weighted)?;

        // KL to N(0, I): ½·Σ(μ² + σ² − 1 − ln σ²), batch-averaged.
        let mu_sq = tape.mul(mu, mu)?;
        let variance = tape.exp(logvar)?;
        let sum_terms = tape.add(mu_sq, variance)?;
        let shifted = tape.add_const(sum_terms, -1.0)?;
        let inner = tape.sub(shifted, logvar)?;
        let kl_sum = tape.sum_all(inner)?;
        let kl = tape.scale(kl_sum, 0.5 / batch as Real)?;

        let total = tape.add(recon, kl)?;
        Ok((total, recon, kl))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push_meta("kind", "cvae-stage");
        c.push_meta("stage", self.arch.stage.number());
        c.push_meta("input_dim", self.arch.input_dim);
        c.push_meta("num_classes", self.arch.num_classes);
        c.push_meta("latent_dim", self.arch.latent_dim);
        c.push_meta("hidden_dim", self.arch.hidden_dim);
        c.push_meta("gamma", self.gamma());
        for (name, tensor) in Self::PARAM_NAMES.iter().zip(self.params()) {
            c.push_tensor(name, tensor.clone());
        }
        c
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        if checkpoint.meta_value("kind") != Some("cvae-stage") {
            return Err(Error::Parse("checkpoint is not a CVAE stage".into()));
        }
        let arch = CvaeArch {
            input_dim: checkpoint.meta_parsed("input_dim")?,
            num_classes: checkpoint.meta_parsed("num_classes")?,
            latent_dim: checkpoint.meta_parsed("latent_dim")?,
            hidden_dim: checkpoint.meta_parsed("hidden_dim")?,
            stage: StageIndex::from_number(checkpoint.meta_parsed("stage")?)?,
        };
        let mut rng = crate::seeds::rng(0);
        let mut stage = Self::new(arch, &mut rng)?;
        for (name, param) in Self::PARAM_NAMES.iter().zip(stage.params_mut()) {
            let stored = checkpoint.tensor(name)?;
            if stored.shape() != param.shape() {
                return Err(Error::Parse(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    stored.shape(),
                    param.shape()
                )));
            }
            param.data_mut().copy_from_slice(stored.data());
        }
        Ok(stage)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// z = μ + exp(½·logvar) ⊙ ε. Pure value computation; inside training the
/// same expression is built on the tape so gradients reach μ and logvar but
/// never ε.
pub fn reparameterize(encoded: &EncoderOutput, eps: &Tensor) -> Result<Tensor> {
    if eps.shape() != encoded.mu.shape() {
        return Err(Error::Dimension(format!(
            "eps shape {:?} vs mu {:?}",
            eps.shape(),
            encoded.mu.shape()
        )));
    }
    let data: Vec<Real> = encoded
        .mu
        .data()
        .iter()
        .zip(encoded.logvar.data())
        .zip(eps.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(encoded.mu.shape().to_vec(), data)
}

/// Mean over the batch of ½·Σᵢ(μᵢ² + σᵢ² − 1 − ln σᵢ²); non-negative, zero
/// exactly when the posterior equals the unit prior.
pub fn kl_gaussian(encoded: &EncoderOutput) -> Result<Real> {
    let shape = encoded.mu.shape();
    if shape != encoded.logvar.shape() || shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "mu {:?} vs logvar {:?}",
            shape,
            encoded.logvar.shape()
        )));
    }
    let batch = shape[0] as Real;
    let sum: Real = encoded
        .mu
        .data()
        .iter()
        .zip(encoded.logvar.data())
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum();
    Ok(0.5 * sum / batch)
}

/// Decode a stage-two latent vector all the way to an image:
/// x̂ = decode₁(decode₂(u, c), c). Deterministic.
pub fn sample_pipeline(
    u: &[Real],
    condition: usize,
    stage1: &CvaeStage,
    stage2: &CvaeStage,
) -> Result<Tensor> {
    let batch = Tensor::new(vec![1, u.len()], u.to_vec())?;
    let images = sample_pipeline_batch(&batch, &[condition], stage1, stage2)?;
    images.reshaped(vec![stage1.input_dim()])
}

/// Batch form of [`sample_pipeline`]: `[b, κ₂]` in, `[b, input_dim]` out.
pub fn sample_pipeline_batch(
    us: &Tensor,
    conditions: &[usize],
    stage1: &CvaeStage,
    stage2: &CvaeStage,
) -> Result<Tensor> {
    check_pipeline_pair(stage1, stage2)?;
    let z_hat = stage2.decode_batch(us, conditions)?;
    stage1.decode_batch(&z_hat, conditions)
}

/// Validate that (stage1, stage2) form a decode pipeline.
pub fn check_pipeline_pair(stage1: &CvaeStage, stage2: &CvaeStage) -> Result<()> {
    if stage1.stage() != StageIndex::One || stage2.stage() != StageIndex::Two {
        return Err(Error::Usage(
            "pipeline needs a stage-1 and a stage-2 model, in order".into(),
        ));
    }
    if stage2.input_dim() != stage1.latent_dim() {
        return Err(Error::Config(format!(
            "stage-2 reconstructs width {} but stage-1 codes have width {}",
            stage2.input_dim(),
            stage1.latent_dim()
        )));
    }
    if stage1.num_classes() != stage2.num_classes() {
        return Err(Error::Config(format!(
            "stage-1 has {} classes, stage-2 has {}",
            stage1.num_classes(),
            stage2.num_classes()
        )));
    }
    Ok(())
}

/// Standard-normal tensor drawn coordinate-wise from `rng`.
pub fn sample_standard_normal(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let n: usize = shape.iter().product();
    let data: Vec<Real> = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v as Real
        })
        .collect();
    let mut t = Tensor::zeros(shape);
    t.data_mut().copy_from_slice(&data);
    t
}

fn concat_cols_data(a: &Tensor, b: &Tensor) -> Tensor {
    let (rows, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Tensor::zeros(vec![rows, ca + cb]);
    for i in 0..rows {
        let dst = &mut out.data_mut()[i * (ca + cb)..(i + 1) * (ca + cb)];
        dst[..ca].copy_from_slice(&a.data()[i * ca..(i + 1) * ca]);
        dst[ca..].copy_from_slice(&b.data()[i * cb..(i + 1) * cb]);
    }
    out
}
