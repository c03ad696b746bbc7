//! Labeled image datasets: IDX loading, a deterministic synthetic shape
//! corpus, stratified train/validation splitting, and shuffled mini-batches.

mod batch;
mod idx;
mod shapes;

pub use batch::BatchIterator;
pub use idx::{load_idx, write_idx};
pub use shapes::synth_shapes;

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::seeds;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Images `[n, height, width, 1]` with pixel values in `[0, 1]` plus one
/// class id per image. Immutable after construction; safe to share across
/// readers.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let shape = images.shape();
        if shape.len() != 4 {
            return Err(Error::Dimension(format!(
                "images must be [n, height, width, channels], got {shape:?}"
            )));
        }
        if shape[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "{} images vs {} labels",
                shape[0],
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Parameter("num_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Parameter(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Parameter("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.images.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.images.shape()[3]
    }

    /// Flattened pixel count per image.
    pub fn input_dim(&self) -> usize {
        self.height() * self.width() * self.channels()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    /// Pixels of image `index`, flattened.
    pub fn image(&self, index: usize) -> &[Real] {
        let d = self.input_dim();
        &self.images.data()[index * d..(index + 1) * d]
    }

    /// A `[len, input_dim]` view of every image, flattened.
    pub fn flat_images(&self) -> Tensor {
        self.images
            .reshaped(vec![self.len(), self.input_dim()])
            .expect("image payload matches its shape")
    }

    /// Gather images and labels at `indices` into a `[b, input_dim]` batch.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let mut batch = Tensor::zeros(vec![indices.len(), d]);
        batch.data_mut().copy_from_slice(&data);
        (batch, labels)
    }

    /// A new dataset holding the images at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let mut images = Tensor::zeros(vec![
            indices.len(),
            self.height(),
            self.width(),
            self.channels(),
        ]);
        images.data_mut().copy_from_slice(&data);
        Self {
            images,
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Per-pixel mean over the whole set.
    pub fn mean_image(&self) -> Vec<Real> {
        let d = self.input_dim();
        let mut mean = vec![0.0; d];
        for i in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.image(i)) {
                *m += v;
            }
        }
        let n = self.len() as Real;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

/// Uniform-noise images in `[0, 1]`, the realism-score baseline.
pub fn uniform_noise_images(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut images = Tensor::zeros(vec![count, dim]);
    for v in images.data_mut() {
        *v = rng.random::<f64>() as Real;
    }
    images
}

/// Disjoint, exhaustive, seed-deterministic partition into (train,
/// validation) with `fraction` of the data in train.
///
/// The split is stratified: each class is divided at the same rate, with
/// largest-remainder rounding so the overall train size is
/// `round(len · fraction)`.
pub fn split(
    dataset: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Parameter("cannot split an empty dataset".into()));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, &label) in dataset.labels().iter().enumerate() {
        by_class[label].push(i);
    }
    for (class, indices) in by_class.iter_mut().enumerate() {
        let mut rng = seeds::rng(seeds::derive_indexed(seed, "split-class", &[class as u64]));
        indices.shuffle(&mut rng);
    }

    let target_train = (dataset.len() as f64 * fraction).round() as usize;
    let target_train = target_train.clamp(1, dataset.len() - 1);
    let mut take: Vec<usize> = by_class
        .iter()
        .map(|ix| (ix.len() as f64 * fraction).floor() as usize)
        .collect();
    let mut remainders: Vec<(usize, f64)> = by_class
        .iter()
        .enumerate()
        .map(|(c, ix)| (c, ix.len() as f64 * fraction - take[c] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut short = target_train.saturating_sub(take.iter().sum::<usize>());
    for &(class, _) in remainders.iter().cycle().take(remainders.len() * 2) {
        if short == 0 {
            break;
        }
        if take[class] < by_class[class].len() {
            take[class] += 1;
            short -= 1;
        }
    }

    let mut train_indices = Vec::new();
    let mut val_indices = Vec::new();
    for (class, indices) in by_class.iter().enumerate() {
        train_indices.extend_from_slice(&indices[..take[class]]);
        val_indices.extend_from_slice(&indices[take[class]..]);
    }
    let mut rng = seeds::rng(seeds::derive(seed, "split-order"));
    train_indices.shuffle(&mut rng);
    val_indices.shuffle(&mut rng);

    Ok((dataset.subset(&train_indices), dataset.subset(&val_indices)))
}
