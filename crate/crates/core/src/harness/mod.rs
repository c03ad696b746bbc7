//! The model under test: a dropout-bearing dense classifier, deterministic
//! prediction, and Monte-Carlo-dropout uncertainty.

mod train;

pub use train::{accuracy, train_classifier, ClassifierTrainOptions, TrainReport};

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Checkpoint, Dense, DenseVars, DropoutMode, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Predictive uncertainty from `passes` stochastic forward passes: the
/// entropy σ of the averaged softmax, bounded by `[0, ln C]`.
#[derive(Debug, Clone)]
pub struct UncertaintyEstimate {
    pub sigma: Real,
    pub mean_probs: Vec<Real>,
    pub passes: usize,
}

/// Anything the generator can test: deterministic prediction plus
/// MC-dropout uncertainty. Implemented by [`Classifier`] and by the test
/// stubs in the generator's suites.
pub trait ModelUnderTest {
    fn num_classes(&self) -> usize;

    /// Deterministic prediction: dropout disabled, label is the argmax of
    /// the softmax output.
    fn predict(&self, image: &Tensor) -> Result<(usize, Vec<Real>)>;

    /// σ from `passes` dropout-active forward passes. Needs a per-call rng
    /// so concurrent callers never share generator state.
    fn mc_uncertainty(
        &self,
        image: &Tensor,
        passes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<UncertaintyEstimate>;
}

/// Dense classifier with one dropout site between the feature layers and
/// the head: `input → h1 → relu → dropout → h2 → relu → logits`.
///
/// Dropout activity is an explicit per-call [`DropoutMode`]; prediction
/// always runs in `Infer` mode and is therefore deterministic, while
/// [`mc_uncertainty`](ModelUnderTest::mc_uncertainty) runs `MonteCarlo`
/// passes.
#[derive(Debug, Clone)]
pub struct Classifier {
    hidden1: Dense,
    hidden2: Dense,
    output: Dense,
    dropout_rate: Real,
    input_dim: usize,
    num_classes: usize,
}

pub(crate) struct ClassifierVars {
    hidden1: DenseVars,
    hidden2: DenseVars,
    output: DenseVars,
}

impl Classifier {
    pub fn new(
        input_dim: usize,
        hidden1: usize,
        hidden2: usize,
        num_classes: usize,
        dropout_rate: Real,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden1 == 0 || hidden2 == 0 || num_classes == 0 {
            return Err(Error::Parameter(
                "classifier dimensions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        Ok(Self {
            hidden1: Dense::new(input_dim, hidden1, rng),
            hidden2: Dense::new(hidden1, hidden2, rng),
            output: Dense::new(hidden2, num_classes, rng),
            dropout_rate,
            input_dim,
            num_classes,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn dropout_rate(&self) -> Real {
        self.dropout_rate
    }

    /// Penultimate width: the feature dimension [`features`](Self::features)
    /// produces.
    pub fn feature_dim(&self) -> usize {
        self.hidden2.out_dim()
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> ClassifierVars {
        ClassifierVars {
            hidden1: self.hidden1.bind(tape),
            hidden2: self.hidden2.bind(tape),
            output: self.output.bind(tape),
        }
    }

    pub(crate) fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.hidden1.weights,
            &self.hidden1.bias,
            &self.hidden2.weights,
            &self.hidden2.bias,
            &self.output.weights,
            &self.output.bias,
        ]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden1.weights,
            &mut self.hidden1.bias,
            &mut self.hidden2.weights,
            &mut self.hidden2.bias,
            &mut self.output.weights,
            &mut self.output.bias,
        ]
    }

    const PARAM_NAMES: [&'static str; 6] = [
        "hidden1.weights",
        "hidden1.bias",
        "hidden2.weights",
        "hidden2.bias",
        "output.weights",
        "output.bias",
    ];

    /// Logits of a `[b, input_dim]` batch under the given dropout mode.
    pub(crate) fn logits_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ClassifierVars,
        batch: Var,
        mode: DropoutMode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let h = vars.hidden1.forward(tape, batch)?;
        let h = tape.relu(h)?;
        let h = match mode {
            DropoutMode::Infer => h,
            active => {
                let rng =
                    rng.ok_or_else(|| Error::Usage("dropout-active forward needs an rng".into()))?;
                tape.dropout(h, self.dropout_rate, active, rng)?
            }
        };
        let h = vars.hidden2.forward(tape, h)?;
        let h = tape.relu(h)?;
        vars.output.forward(tape, h)
    }

    fn batch_of(&self, image: &Tensor) -> Result<Tensor> {
        if image.numel() != self.input_dim {
            return Err(Error::Dimension(format!(
                "image has {} values, classifier expects {}",
                image.numel(),
                self.input_dim
            )));
        }
        image.reshaped(vec![1, self.input_dim])
    }

    /// Deterministic batch prediction: labels and softmax rows.
    pub fn predict_batch(&self, images: &Tensor) -> Result<(Vec<usize>, Tensor)> {
        let shape = images.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Dimension(format!(
                "expected [batch, {}], got {shape:?}",
                self.input_dim
            )));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.leaf(images);
        let logits = self.logits_on_tape(&mut tape, &vars, x, DropoutMode::Infer, None)?;
        let probs = tape.softmax(logits)?;
        let probs = tape.value(probs).clone();
        let labels = (0..shape[0]).map(|i| argmax(probs.row(i))).collect();
        Ok((labels, probs))
    }

    /// Penultimate-layer activations (dropout off): the feature embedding
    /// used for realism scoring.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        let shape = images.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Dimension(format!(
                "expected [batch, {}], got {shape:?}",
                self.input_dim
            )));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.leaf(images);
        let h = vars.hidden1.forward(&mut tape, x)?;
        let h = tape.relu(h)?;
        let h = vars.hidden2.forward(&mut tape, h)?;
        let h = tape.relu(h)?;
        Ok(tape.value(h).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push_meta("kind", "classifier");
        c.push_meta("input_dim", self.input_dim);
        c.push_meta("hidden1", self.hidden1.out_dim());
        c.push_meta("hidden2", self.hidden2.out_dim());
        c.push_meta("num_classes", self.num_classes);
        c.push_meta("dropout_rate", self.dropout_rate);
        for (name, tensor) in Self::PARAM_NAMES.iter().zip(self.params()) {
            c.push_tensor(name, tensor.clone());
        }
        c
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        if checkpoint.meta_value("kind") != Some("classifier") {
            return Err(Error::Parse("checkpoint is not a classifier".into()));
        }
        let mut rng = crate::seeds::rng(0);
        let mut model = Self::new(
            checkpoint.meta_parsed("input_dim")?,
            checkpoint.meta_parsed("hidden1")?,
            checkpoint.meta_parsed("hidden2")?,
            checkpoint.meta_parsed("num_classes")?,
            checkpoint.meta_parsed("dropout_rate")?,
            &mut rng,
        )?;
        for (name, param) in Self::PARAM_NAMES.iter().zip(model.params_mut()) {
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
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl ModelUnderTest for Classifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, image: &Tensor) -> Result<(usize, Vec<Real>)> {
        let batch = self.batch_of(image)?;
        let (labels, probs) = self.predict_batch(&batch)?;
        Ok((labels[0], probs.row(0).to_vec()))
    }

    fn mc_uncertainty(
        &self,
        image: &Tensor,
        passes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<UncertaintyEstimate> {
        if passes < 1 {
            return Err(Error::Parameter(
                "uncertainty needs at least one pass".into(),
            ));
        }
        let batch = self.batch_of(image)?;
        let mut mean_probs = vec![0.0; self.num_classes];
        for _ in 0..passes {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let x = tape.leaf(&batch);
            let logits =
                self.logits_on_tape(&mut tape, &vars, x, DropoutMode::MonteCarlo, Some(rng))?;
            let probs = tape.softmax(logits)?;
            for (acc, p) in mean_probs.iter_mut().zip(tape.value(probs).data()) {
                *acc += p;
            }
        }
        for p in &mut mean_probs {
            *p /= passes as Real;
        }
        let sigma = entropy(&mean_probs).min((self.num_classes as Real).ln());
        Ok(UncertaintyEstimate {
            sigma,
            mean_probs,
            passes,
        })
    }
}

/// −Σ p ln p with the 0·ln 0 = 0 convention; never negative.
pub fn entropy(probs: &[Real]) -> Real {
    let h: Real = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

pub(crate) fn argmax(values: &[Real]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
